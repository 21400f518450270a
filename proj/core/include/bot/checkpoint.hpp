#pragma once

#include <filesystem>
#include <string>

#include "bot/encoder.hpp"

namespace bot {

struct Checkpoint {
  EncoderConfig config;
  ParameterStore params;
};

// JSON document: {"format", "graph_fingerprint", "config", "tensors": {name: {rows, cols, data}}}.
std::string serialize_checkpoint(const EmbodimentGraph& g, const EncoderConfig& cfg, const ParameterStore& params);
// Throws if the document was written for a different graph.
Checkpoint deserialize_checkpoint(const std::string& document, const EmbodimentGraph& g);

void save_checkpoint(const std::filesystem::path& path, const EmbodimentGraph& g, const EncoderConfig& cfg,
                     const ParameterStore& params);
Checkpoint load_checkpoint(const std::filesystem::path& path, const EmbodimentGraph& g);

}  // namespace bot
