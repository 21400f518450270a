#include "bot/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace bot {

namespace {

constexpr const char* kFormat = "bot-checkpoint-v1";

nlohmann::json config_to_json(const EncoderConfig& cfg) {
  return {{"variant", std::string(to_string(cfg.variant))},
          {"random_mask_seed", cfg.random_mask_seed},
          {"num_layers", cfg.num_layers},
          {"num_heads", cfg.num_heads},
          {"d_model", cfg.d_model},
          {"d_ff", cfg.d_ff},
          {"positional_encoding", cfg.use_positional_encoding},
          {"shared_tokenizer", cfg.shared_tokenizer}};
}

EncoderConfig config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.variant = parse_variant(j.at("variant").get<std::string>());
  cfg.random_mask_seed = j.at("random_mask_seed").get<std::uint64_t>();
  cfg.num_layers = j.at("num_layers").get<int>();
  cfg.num_heads = j.at("num_heads").get<int>();
  cfg.d_model = j.at("d_model").get<int>();
  cfg.d_ff = j.at("d_ff").get<int>();
  cfg.use_positional_encoding = j.at("positional_encoding").get<bool>();
  cfg.shared_tokenizer = j.at("shared_tokenizer").get<bool>();
  cfg.validate();
  return cfg;
}

}  // namespace

std::string serialize_checkpoint(const EmbodimentGraph& g, const EncoderConfig& cfg, const ParameterStore& params) {
  nlohmann::json doc;
  doc["format"] = kFormat;
  // Stored as a string: JSON readers commonly lose precision past 2^53.
  doc["graph_fingerprint"] = std::to_string(g.fingerprint());
  doc["config"] = config_to_json(cfg);
  auto& tensors = doc["tensors"] = nlohmann::json::object();
  params.for_each([&](const std::string& name, const Matrix& m) {
    tensors[name] = {{"rows", m.rows()},
                     {"cols", m.cols()},
                     {"data", std::vector<double>(m.data(), m.data() + m.size())}};
  });
  return doc.dump();
}

Checkpoint deserialize_checkpoint(const std::string& document, const EmbodimentGraph& g) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed document: ") + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw Error("checkpoint: unknown format");
    if (doc.at("graph_fingerprint").get<std::string>() != std::to_string(g.fingerprint())) {
      throw Error("checkpoint: graph fingerprint mismatch");
    }
    Checkpoint ck;
    ck.config = config_from_json(doc.at("config"));
    // Shapes come from a fresh store; values from the document.
    ck.params = init_params(g, ck.config, 0);
    const auto& tensors = doc.at("tensors");
    std::size_t seen = 0;
    ck.params.for_each([&](const std::string& name, Matrix& m) {
      const auto& t = tensors.at(name);
      if (t.at("rows").get<Eigen::Index>() != m.rows() || t.at("cols").get<Eigen::Index>() != m.cols()) {
        throw Error("checkpoint: tensor '" + name + "' has the wrong shape");
      }
      const auto data = t.at("data").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(data.size()) != m.size()) throw Error("checkpoint: tensor '" + name + "' size");
      std::copy(data.begin(), data.end(), m.data());
      ++seen;
    });
    if (seen != tensors.size()) throw Error("checkpoint: unexpected extra tensors");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: malformed document: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const EmbodimentGraph& g, const EncoderConfig& cfg,
                     const ParameterStore& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out << serialize_checkpoint(g, cfg, params);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const EmbodimentGraph& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("checkpoint: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return deserialize_checkpoint(buffer.str(), g);
}

}  // namespace bot
