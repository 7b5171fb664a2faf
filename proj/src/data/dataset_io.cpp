#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "seqagree/data/synth.hpp"
#include "seqagree/errors.hpp"

namespace seqagree::data {

namespace {

constexpr std::string_view kMagic = "seqagree-dataset";

std::string next_line(std::istream& in, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: unexpected end of file after line " + std::to_string(line_no));
  ++line_no;
  return line;
}

template <typename T>
T header_value(std::istream& in, std::size_t& line_no, std::string_view key) {
  std::istringstream ss(next_line(in, line_no));
  std::string k;
  T value{};
  if (!(ss >> k >> value) || k != key) {
    throw FormatError("dataset line " + std::to_string(line_no) + ": expected '" + std::string(key) + "'");
  }
  return value;
}

double parse_real(const std::string& token, std::size_t line_no) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(token, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != token.size()) throw FormatError("dataset line " + std::to_string(line_no) + ": bad number '" + token + "'");
  return v;
}

}  // namespace

std::string format_real(double value, int significant_digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
  return buf;
}

void write_split(std::ostream& out, const TaskSpec& spec, const DatasetSplit& split) {
  out << kMagic << ' ' << kDatasetFormatVersion << '\n';
  out << "split " << split.name << '\n';
  out << "vocab_size " << spec.vocab_size << '\n';
  out << "feature_dim " << spec.feature_dim << '\n';
  out << "min_segment " << spec.min_segment << '\n';
  out << "max_segment " << spec.max_segment << '\n';
  out << "noise_std " << format_real(spec.noise_std, 17) << '\n';
  out << "min_prototype_distance " << format_real(spec.min_prototype_distance, 17) << '\n';
  out << "seed " << spec.seed << '\n';
  out << "count " << split.items.size() << '\n';
  for (const auto& u : split.items) {
    if (u.y.dim() != spec.feature_dim) throw ShapeError("write_split: frame dim does not match task feature_dim");
    out << u.x.size();
    for (int t : u.x.tokens) out << ' ' << t;
    out << ' ' << u.y.length();
    for (double v : u.y.values()) out << ' ' << format_real(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_split: stream error");
}

SplitFile read_split(std::istream& in) {
  std::size_t line_no = 0;
  SplitFile f;
  {
    std::istringstream ss(next_line(in, line_no));
    std::string magic;
    int version = 0;
    if (!(ss >> magic >> version) || magic != kMagic) throw FormatError("dataset: missing header");
    if (version != kDatasetFormatVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  }
  f.split.name = header_value<std::string>(in, line_no, "split");
  f.spec.vocab_size = header_value<std::size_t>(in, line_no, "vocab_size");
  f.spec.feature_dim = header_value<std::size_t>(in, line_no, "feature_dim");
  f.spec.min_segment = header_value<std::size_t>(in, line_no, "min_segment");
  f.spec.max_segment = header_value<std::size_t>(in, line_no, "max_segment");
  f.spec.noise_std = parse_real(header_value<std::string>(in, line_no, "noise_std"), line_no);
  f.spec.min_prototype_distance = parse_real(header_value<std::string>(in, line_no, "min_prototype_distance"), line_no);
  f.spec.seed = header_value<std::uint64_t>(in, line_no, "seed");
  const auto count = header_value<std::size_t>(in, line_no, "count");

  const std::size_t dim = f.spec.feature_dim;
  f.split.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream ss(next_line(in, line_no));
    const auto fail = [&](const std::string& what) {
      return FormatError("dataset line " + std::to_string(line_no) + ": " + what);
    };
    Utterance u;
    std::size_t T = 0;
    if (!(ss >> T) || T == 0) throw fail("bad token count");
    u.x.tokens.resize(T);
    for (int& t : u.x.tokens) {
      if (!(ss >> t)) throw fail("truncated token list");
      if (t < 0 || static_cast<std::size_t>(t) >= f.spec.vocab_size) throw fail("token outside vocabulary");
    }
    std::size_t frames = 0;
    if (!(ss >> frames) || frames == 0) throw fail("bad frame count");
    u.y = FeatureSequence(frames, dim);
    std::string token;
    for (double& v : u.y.values()) {
      if (!(ss >> token)) throw fail("truncated frame values");
      v = parse_real(token, line_no);
    }
    if (ss >> token) throw fail("trailing data");
    f.split.items.push_back(std::move(u));
  }
  std::string rest;
  while (std::getline(in, rest)) {
    if (!rest.empty()) throw FormatError("dataset: trailing data after " + std::to_string(count) + " records");
  }
  return f;
}

void save_split(const std::filesystem::path& path, const TaskSpec& spec, const DatasetSplit& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_split(out, spec, split);
}

SplitFile load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_split(in);
}

}  // namespace seqagree::data
