#include <charconv>
#include <fstream>
#include <sstream>

#include "bot/bench.hpp"

namespace bot {

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  for (;;) {
    const size_t pos = line.find(sep, start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <class T>
T parse_number(std::string_view field, size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw Error("csv: line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

void write_row(std::ostream& out, const BenchRecord& r) {
  out << to_string(r.kernel) << ',' << r.n << ',' << r.d_k << ',' << format_double(r.zero_fraction) << ',' << r.trial
      << ',' << r.runtime_ns << ',' << r.preprocess_ns << ',' << format_double(r.counted_flops) << ','
      << format_double(r.modeled_flops) << '\n';
}

}  // namespace

std::string to_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream out;
  out << kCsvHeader << '\n';
  for (const auto& r : records) write_row(out, r);
  return out.str();
}

void emit_csv(const std::vector<BenchRecord>& records, const std::filesystem::path& path, bool append) {
  std::error_code ec;
  const bool has_content = append && std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > 0;
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw Error("csv: cannot write " + path.string());
  if (!has_content) out << kCsvHeader << '\n';
  for (const auto& r : records) write_row(out, r);
  if (!out) throw Error("csv: write failed for " + path.string());
}

std::vector<BenchRecord> parse_csv(std::string_view text) {
  std::vector<BenchRecord> records;
  size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const size_t eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kCsvHeader) throw Error("csv: unexpected header '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 9) throw Error("csv: line " + std::to_string(line_no) + ": expected 9 columns");
    BenchRecord r;
    if (f[0] == "dense") {
      r.kernel = BenchKernel::dense;
    } else if (f[0] == "sparse") {
      r.kernel = BenchKernel::sparse;
    } else {
      throw Error("csv: line " + std::to_string(line_no) + ": unknown kernel '" + std::string(f[0]) + "'");
    }
    r.n = parse_number<int>(f[1], line_no);
    r.d_k = parse_number<int>(f[2], line_no);
    r.zero_fraction = parse_number<double>(f[3], line_no);
    r.trial = parse_number<int>(f[4], line_no);
    r.runtime_ns = parse_number<std::int64_t>(f[5], line_no);
    r.preprocess_ns = parse_number<std::int64_t>(f[6], line_no);
    r.counted_flops = parse_number<double>(f[7], line_no);
    r.modeled_flops = parse_number<double>(f[8], line_no);
    records.push_back(r);
  }
  if (!header_seen) throw Error("csv: missing header");
  return records;
}

std::vector<BenchRecord> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("csv: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_csv(buffer.str());
}

}  // namespace bot
