#include "seqagree/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "seqagree/errors.hpp"

namespace seqagree::harness {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ConfigError(std::string(key), "cannot parse '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ConfigError(std::string(key), "expected true or false, got '" + std::string(text) + "'");
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string key;
  std::function<void(std::string_view)> set;
  // Empty optional fields are left out of the canonical text.
  std::function<std::optional<std::string>()> get;
};

class Registry {
 public:
  explicit Registry(RunConfig& c) {
    size("task.vocab_size", c.task.vocab_size);
    size("task.feature_dim", c.task.feature_dim);
    size("task.min_segment", c.task.min_segment);
    size("task.max_segment", c.task.max_segment);
    real("task.noise_std", c.task.noise_std);
    real("task.min_prototype_distance", c.task.min_prototype_distance);
    u64("task.seed", c.task.seed);

    size("data.train_count", c.data.train_count);
    size("data.in_domain_count", c.data.in_domain_count);
    size("data.ood_count", c.data.ood_count);
    size("data.train_min_symbols", c.data.train_lengths.min);
    size("data.train_max_symbols", c.data.train_lengths.max);
    size("data.ood_min_symbols", c.data.ood_lengths.min);
    size("data.ood_max_symbols", c.data.ood_lengths.max);
    u64("data.seed", c.data.seed);

    size("model.embed_dim", c.model.embed_dim);
    size("model.encoder_dim", c.model.encoder_dim);
    size("model.decoder_dim", c.model.decoder_dim);
    size("model.attention_dim", c.model.attention_dim);
    size("model.location_filters", c.model.location_filters);
    size("model.location_width", c.model.location_width);

    add("train.method", [&c](std::string_view v) { c.train.method = train::parse_method(v); },
        [&c] { return std::optional<std::string>(train::method_name(c.train.method)); });
    real("train.lambda", c.train.lambda);
    real("train.learning_rate", c.train.learning_rate);
    size("train.decay_after_steps", c.train.decay_after_steps);
    real("train.decay_factor", c.train.decay_factor);
    size("train.pretrain_steps", c.train.pretrain_steps);
    optional_size("train.joint_iterations", c.train.joint_iterations);
    size("train.steps_per_iteration", c.train.steps_per_iteration);
    size("train.batch_size", c.train.batch_size);
    u64("train.seed", c.train.seed);
    real("train.scheduled_sampling_p", c.train.scheduled_sampling_p);
    add("train.agreement_mode", [&c](std::string_view v) { c.train.agreement_mode = train::parse_agreement_mode(v); },
        [&c] { return std::optional<std::string>(train::agreement_mode_name(c.train.agreement_mode)); });
    real("train.clip_norm", c.train.clip_norm);
    optional_size("train.steps", c.train.steps);

    boolean("eval.use_stop_token", c.eval.use_stop_token);
    real("eval.stop_threshold", c.eval.stop_threshold);
    real("eval.max_length_factor", c.eval.max_length_factor);

    size("run.checkpoint_every", c.run.checkpoint_every);
    size("run.metrics_every", c.run.metrics_every);
  }

  const std::vector<Field>& fields() const { return fields_; }

  const Field* find(std::string_view key) const {
    for (const auto& f : fields_) {
      if (f.key == key) return &f;
    }
    return nullptr;
  }

 private:
  void add(std::string key, std::function<void(std::string_view)> set,
           std::function<std::optional<std::string>()> get) {
    fields_.push_back({std::move(key), std::move(set), std::move(get)});
  }

  void size(const std::string& key, std::size_t& target) {
    add(key, [&target, key](std::string_view v) { target = parse_number<std::size_t>(key, v); },
        [&target] { return std::optional<std::string>(std::to_string(target)); });
  }
  void u64(const std::string& key, std::uint64_t& target) {
    add(key, [&target, key](std::string_view v) { target = parse_number<std::uint64_t>(key, v); },
        [&target] { return std::optional<std::string>(std::to_string(target)); });
  }
  void real(const std::string& key, double& target) {
    add(key, [&target, key](std::string_view v) { target = parse_number<double>(key, v); },
        [&target] { return std::optional<std::string>(format_double(target)); });
  }
  void boolean(const std::string& key, bool& target) {
    add(key, [&target, key](std::string_view v) { target = parse_bool(key, v); },
        [&target] { return std::optional<std::string>(target ? "true" : "false"); });
  }
  void optional_size(const std::string& key, std::optional<std::size_t>& target) {
    add(key, [&target, key](std::string_view v) { target = parse_number<std::size_t>(key, v); },
        [&target]() -> std::optional<std::string> {
          if (!target) return std::nullopt;
          return std::to_string(*target);
        });
  }

  std::vector<Field> fields_;
};

}  // namespace

RunConfig::RunConfig() {
  model.vocab_size = task.vocab_size;
  model.feature_dim = task.feature_dim;
}

void RunConfig::validate() const {
  task.validate();
  if (model.vocab_size != task.vocab_size || model.feature_dim != task.feature_dim) {
    throw ConfigError("model", "vocabulary and feature sizes must match the task");
  }
  model.validate();
  train.validate();
  auto positive = [](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(field, "must be positive");
  };
  positive(data.train_count, "data.train_count");
  positive(data.in_domain_count, "data.in_domain_count");
  positive(data.ood_count, "data.ood_count");
  positive(data.train_lengths.min, "data.train_min_symbols");
  positive(data.ood_lengths.min, "data.ood_min_symbols");
  if (data.train_lengths.max < data.train_lengths.min) {
    throw ConfigError("data.train_max_symbols", "below data.train_min_symbols");
  }
  if (data.ood_lengths.max < data.ood_lengths.min) {
    throw ConfigError("data.ood_max_symbols", "below data.ood_min_symbols");
  }
  if (data.ood_lengths.min <= data.train_lengths.max) {
    throw ConfigError("data.ood_min_symbols", "out-of-domain lengths must exceed data.train_max_symbols");
  }
  if (!(eval.stop_threshold > 0.0 && eval.stop_threshold <= 1.0)) {
    throw ConfigError("eval.stop_threshold", "must lie in (0, 1]");
  }
  if (!(eval.max_length_factor >= 1.0)) throw ConfigError("eval.max_length_factor", "must be at least 1");
}

RunConfig parse_config(std::string_view text) {
  RunConfig c;
  Registry registry(c);
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const Field* field = registry.find(key);
    if (field == nullptr) throw ConfigError(std::string(key), "unknown key");
    if (!seen.insert(std::string(key)).second) throw ConfigError(std::string(key), "repeated key");
    if (value.empty()) throw ConfigError(std::string(key), "missing value");
    try {
      field->set(value);
    } catch (const ConfigError& e) {
      if (e.field() == key) throw;
      throw ConfigError(std::string(key), e.what());
    }
  }
  c.model.vocab_size = c.task.vocab_size;
  c.model.feature_dim = c.task.feature_dim;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& config) {
  RunConfig copy = config;
  Registry registry(copy);
  std::string out;
  for (const auto& f : registry.fields()) {
    if (auto v = f.get()) out += f.key + " = " + *v + "\n";
  }
  return out;
}

std::uint64_t split_seed(const DataConfig& data, std::string_view split_name) {
  std::uint64_t index = 0;
  if (split_name == data::kInDomainSplit) index = 1;
  if (split_name == data::kOutOfDomainSplit) index = 2;
  std::seed_seq seq{static_cast<std::uint32_t>(data.seed), static_cast<std::uint32_t>(data.seed >> 32),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace seqagree::harness
