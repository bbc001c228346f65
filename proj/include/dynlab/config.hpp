#pragma once

// Experiment configuration: sectioned key = value text.
//
//   # comment
//   [experiment]
//   kind = noisy
//   seeds = 1, 2, 3
//
// Every key must appear in the schema below; unknown sections or keys are
// rejected. Values are normalized (numbers re-printed at full precision,
// lists re-joined, booleans spelled true/false) so the config hash ignores
// whitespace, key order and number spelling.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/labelbank.hpp"
#include "dynlab/metaloop.hpp"

namespace dynlab {

enum class ValueType { text, integer, real, boolean, reals, integers };

struct ConfigKey {
  const char* section;
  const char* key;
  ValueType type;
  const char* fallback;  // "" = unset
};

// "auto" values are resolved per experiment kind before hashing.
inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"experiment", "kind", ValueType::text, "supervised"},
      {"experiment", "method", ValueType::text, "auto"},
      {"experiment", "seeds", ValueType::integers, "1,2,3"},
      {"experiment", "output_dir", ValueType::text, "runs"},

      {"data", "source", ValueType::text, "blobs"},
      {"data", "seed", ValueType::integer, "7"},
      {"data", "classes", ValueType::integer, "3"},
      {"data", "n_per_class", ValueType::integer, "1000"},
      {"data", "test_per_class", ValueType::integer, "500"},
      {"data", "dim", ValueType::integer, "2"},
      {"data", "separation", ValueType::real, "4"},
      {"data", "turns", ValueType::real, "1.5"},
      {"data", "images", ValueType::text, ""},
      {"data", "labels", ValueType::text, ""},
      {"data", "path", ValueType::text, ""},
      {"data", "subset_per_class", ValueType::integer, "0"},
      {"data", "test_frac", ValueType::real, "0.2"},
      {"data", "holdout_frac", ValueType::real, "auto"},
      {"data", "noise", ValueType::real, ""},
      {"data", "standardize", ValueType::boolean, "true"},
      {"data", "image_shape", ValueType::integers, ""},

      {"model", "arch", ValueType::text, "mlp"},
      {"model", "hidden", ValueType::integers, "32"},
      {"model", "filters", ValueType::integers, "4,8"},
      {"model", "kernel", ValueType::integer, "3"},
      {"model", "conv_hidden", ValueType::integer, "32"},

      {"optim", "lr", ValueType::real, "0.1"},
      {"optim", "momentum", ValueType::real, "0.9"},
      {"optim", "weight_decay", ValueType::real, "0"},
      {"optim", "schedule_epochs", ValueType::integers, ""},
      {"optim", "schedule_multipliers", ValueType::reals, ""},
      {"optim", "steps", ValueType::integer, "1000"},
      {"optim", "batch_train", ValueType::integer, "128"},
      {"optim", "batch_meta", ValueType::integer, "256"},

      {"labels", "mode", ValueType::text, "none"},
      {"labels", "init_target", ValueType::real, "0.9"},
      {"labels", "label_lr", ValueType::real, "50"},
      {"labels", "init_grid", ValueType::reals, "0.3,0.5,0.7,0.9"},
      {"labels", "label_lr_grid", ValueType::reals, "5,10,25,50,75,100"},
      {"labels", "grad_path", ValueType::text, "closed_form"},
      {"labels", "fd_epsilon", ValueType::real, "1e-6"},
      {"labels", "curriculum", ValueType::boolean, "false"},
      {"labels", "smoothing_eps", ValueType::real, "0.1"},
      {"labels", "confidence_beta", ValueType::real, "0.1"},

      {"distill", "source", ValueType::text, "converged_labels"},
      {"distill", "temperature", ValueType::real, ""},
      {"distill", "temperature_grid", ValueType::reals, ""},
      {"distill", "student_arch", ValueType::text, "auto"},
      {"distill", "student_hidden", ValueType::integers, ""},

      {"folds", "k", ValueType::integer, "5"},

      {"log", "log_every", ValueType::integer, "100"},
      {"log", "snapshot_every", ValueType::integer, "0"},
      {"log", "checkpoint", ValueType::boolean, "true"},
  };
  return schema;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(v);
  while (std::getline(is, cur, ',')) {
    auto t = trim(cur);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

inline std::optional<double> to_real(const std::string& s) {
  double v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

inline std::optional<long long> to_integer(const std::string& s) {
  long long v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

inline std::string normalize_value(const std::string& field, ValueType type, const std::string& raw) {
  if (raw.empty() || raw == "auto") return raw;
  auto bad = [&](const char* what) {
    return ConfigError("field '" + field + "': expected " + what + ", got '" + raw + "'");
  };
  switch (type) {
    case ValueType::text:
      return raw;
    case ValueType::integer: {
      const auto v = to_integer(raw);
      if (!v) throw bad("an integer");
      return std::to_string(*v);
    }
    case ValueType::real: {
      const auto v = to_real(raw);
      if (!v) throw bad("a number");
      return format_double(*v);
    }
    case ValueType::boolean:
      if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return "true";
      if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return "false";
      throw bad("a boolean");
    case ValueType::reals:
    case ValueType::integers: {
      std::string out;
      for (const auto& item : split_list(raw)) {
        std::string norm;
        if (type == ValueType::reals) {
          const auto v = to_real(item);
          if (!v) throw bad("a comma-separated list of numbers");
          norm = format_double(*v);
        } else {
          const auto v = to_integer(item);
          if (!v) throw bad("a comma-separated list of integers");
          norm = std::to_string(*v);
        }
        if (!out.empty()) out += ',';
        out += norm;
      }
      return out;
    }
  }
  return raw;
}

}  // namespace detail

// Normalized "section.key" -> value map covering every schema key.
class ConfigValues {
 public:
  static ConfigValues parse(const std::string& text) {
    ConfigValues cv;
    for (const auto& k : config_schema()) {
      const auto field = std::string(k.section) + "." + k.key;
      cv.values_[field] = detail::normalize_value(field, k.type, k.fallback);
    }
    std::map<std::string, bool> seen;
    std::string section;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      auto t = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
      if (t.empty()) continue;
      const std::string where = "line " + std::to_string(lineno) + ": ";
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + "malformed section header");
        section = detail::trim(t.substr(1, t.size() - 2));
        const bool known = std::any_of(config_schema().begin(), config_schema().end(),
                                       [&](const ConfigKey& k) { return section == k.section; });
        if (!known) throw ConfigError(where + "unknown section [" + section + "]");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
      if (section.empty()) throw ConfigError(where + "key outside of any section");
      const auto key = detail::trim(t.substr(0, eq));
      const auto field = section + "." + key;
      const auto* spec = find(field);
      if (!spec) throw ConfigError(where + "unknown field '" + field + "'");
      if (seen[field]) throw ConfigError(where + "duplicate field '" + field + "'");
      seen[field] = true;
      cv.values_[field] = detail::normalize_value(field, spec->type, detail::trim(t.substr(eq + 1)));
    }
    cv.resolve();
    return cv;
  }

  static ConfigValues load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  // Override one field (normalized and re-resolved).
  void set(const std::string& field, const std::string& value) {
    const auto* spec = find(field);
    if (!spec) throw ConfigError("unknown field '" + field + "'");
    values_[field] = detail::normalize_value(field, spec->type, value);
    resolve();
  }

  bool has(const std::string& field) const { return !get(field).empty(); }
  const std::string& get(const std::string& field) const {
    const auto it = values_.find(field);
    if (it == values_.end()) throw ConfigError("unknown field '" + field + "'");
    return it->second;
  }
  std::string text(const std::string& f) const { return get(f); }
  double real(const std::string& f) const { return *detail::to_real(required(f)); }
  long long integer(const std::string& f) const { return *detail::to_integer(required(f)); }
  std::size_t count(const std::string& f) const {
    const auto v = integer(f);
    if (v < 0) throw ConfigError("field '" + f + "': must be non-negative");
    return static_cast<std::size_t>(v);
  }
  bool boolean(const std::string& f) const { return required(f) == "true"; }
  std::vector<double> reals(const std::string& f) const {
    std::vector<double> out;
    for (const auto& s : detail::split_list(get(f))) out.push_back(*detail::to_real(s));
    return out;
  }
  std::vector<long long> integers(const std::string& f) const {
    std::vector<long long> out;
    for (const auto& s : detail::split_list(get(f))) out.push_back(*detail::to_integer(s));
    return out;
  }

  // Sorted, default-filled "field=value" lines.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  // 64-bit FNV-1a of the canonical form, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static const ConfigKey* find(const std::string& field) {
    for (const auto& k : config_schema()) {
      if (field == std::string(k.section) + "." + k.key) return &k;
    }
    return nullptr;
  }

  const std::string& required(const std::string& f) const {
    const auto& v = get(f);
    if (v.empty()) throw ConfigError("missing required field '" + f + "'");
    return v;
  }

  void resolve() {
    const auto& kind = values_["experiment.kind"];
    auto& holdout = values_["data.holdout_frac"];
    if (holdout.empty() || holdout == "auto") holdout = kind == "noisy" ? "0.02" : "0.2";
    auto& student = values_["distill.student_arch"];
    if (student.empty() || student == "auto") student = values_["model.arch"];
    if (values_["distill.student_hidden"].empty()) values_["distill.student_hidden"] = values_["model.hidden"];
    auto& method = values_["experiment.method"];
    if (method.empty() || method == "auto") method = values_["labels.mode"] == "none" ? "onehot" : "meta";
  }

  std::map<std::string, std::string> values_;
};

enum class ExperimentKind { supervised, noisy, ablation_static, distill, transfer };

inline ExperimentKind parse_kind(const std::string& s) {
  if (s == "supervised") return ExperimentKind::supervised;
  if (s == "noisy") return ExperimentKind::noisy;
  if (s == "ablation_static") return ExperimentKind::ablation_static;
  if (s == "distill") return ExperimentKind::distill;
  if (s == "transfer") return ExperimentKind::transfer;
  throw ConfigError("field 'experiment.kind': unknown kind '" + s +
                    "' (supervised, noisy, ablation_static, distill, transfer)");
}

enum class LabelMode { none, class_wise, instance };

struct ExperimentConfig {
  ConfigValues values;
  ExperimentKind kind = ExperimentKind::supervised;
  std::string method;
  LabelMode label_mode = LabelMode::none;
  std::vector<std::uint64_t> seeds;
  MetaConfig meta;
  std::string hash;

  static ExperimentConfig from(ConfigValues v) {
    ExperimentConfig c;
    c.kind = parse_kind(v.text("experiment.kind"));
    c.method = v.text("experiment.method");
    const auto mode = v.text("labels.mode");
    if (mode == "none") c.label_mode = LabelMode::none;
    else if (mode == "class") c.label_mode = LabelMode::class_wise;
    else if (mode == "instance") c.label_mode = LabelMode::instance;
    else throw ConfigError("field 'labels.mode': expected none, class or instance, got '" + mode + "'");

    static const char* methods[] = {"meta", "onehot", "label_smoothing", "confidence_penalty"};
    if (std::find(std::begin(methods), std::end(methods), c.method) == std::end(methods)) {
      throw ConfigError("field 'experiment.method': unknown method '" + c.method + "'");
    }
    const bool needs_bank = c.method == "meta" || c.kind == ExperimentKind::ablation_static ||
                            c.kind == ExperimentKind::transfer ||
                            (c.kind == ExperimentKind::distill && v.text("distill.source") == "converged_labels");
    if (needs_bank && c.label_mode == LabelMode::none) {
      throw ConfigError("field 'labels.mode': must be class or instance for this experiment");
    }
    if (c.kind == ExperimentKind::noisy && !v.has("data.noise")) {
      throw ConfigError("missing required field 'data.noise' for kind=noisy");
    }
    if (c.kind == ExperimentKind::transfer && !v.has("data.noise")) {
      throw ConfigError("missing required field 'data.noise' for kind=transfer");
    }
    if (v.has("data.noise")) {
      const double p = v.real("data.noise");
      if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("field 'data.noise': must lie in [0, 1]");
    }
    const double holdout = v.real("data.holdout_frac");
    if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("field 'data.holdout_frac': must lie in (0, 1)");
    const auto src = v.text("distill.source");
    if (src != "converged_labels" && src != "teacher_logits") {
      throw ConfigError("field 'distill.source': expected converged_labels or teacher_logits");
    }
    if (v.has("distill.temperature") && !(v.real("distill.temperature") > 0.0)) {
      throw ConfigError("field 'distill.temperature': must be positive");
    }

    for (auto s : v.integers("experiment.seeds")) {
      if (s < 0) throw ConfigError("field 'experiment.seeds': seeds must be non-negative");
      c.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (c.seeds.empty()) throw ConfigError("field 'experiment.seeds': at least one seed is required");

    auto& loop = c.meta.loop;
    loop.steps = v.count("optim.steps");
    loop.batch_train = v.count("optim.batch_train");
    loop.batch_meta = v.count("optim.batch_meta");
    if (loop.steps == 0) throw ConfigError("field 'optim.steps': must be >= 1");
    if (loop.batch_train == 0) throw ConfigError("field 'optim.batch_train': must be >= 1");
    if (loop.batch_meta == 0) throw ConfigError("field 'optim.batch_meta': must be >= 1");
    loop.sgd.lr = v.real("optim.lr");
    loop.sgd.momentum = v.real("optim.momentum");
    loop.sgd.weight_decay = v.real("optim.weight_decay");
    if (!(loop.sgd.lr > 0.0)) throw ConfigError("field 'optim.lr': must be positive");
    if (!(loop.sgd.momentum >= 0.0 && loop.sgd.momentum < 1.0)) {
      throw ConfigError("field 'optim.momentum': must lie in [0, 1)");
    }
    if (!(loop.sgd.weight_decay >= 0.0)) throw ConfigError("field 'optim.weight_decay': must be >= 0");
    const auto epochs = v.integers("optim.schedule_epochs");
    const auto mults = v.reals("optim.schedule_multipliers");
    if (epochs.size() != mults.size()) {
      throw ConfigError("field 'optim.schedule_multipliers': needs one entry per schedule epoch");
    }
    for (std::size_t i = 0; i < epochs.size(); ++i) {
      if (epochs[i] < 0) throw ConfigError("field 'optim.schedule_epochs': must be non-negative");
      loop.sgd.schedule.emplace_back(static_cast<std::size_t>(epochs[i]), mults[i]);
    }
    loop.log_every = v.count("log.log_every");
    loop.snapshot_every = v.count("log.snapshot_every");
    loop.entropy_curriculum = v.boolean("labels.curriculum");
    c.meta.grad_path = parse_grad_path(v.text("labels.grad_path"));
    c.meta.fd_epsilon = v.real("labels.fd_epsilon");
    if (!(c.meta.fd_epsilon > 0.0)) throw ConfigError("field 'labels.fd_epsilon': must be positive");

    if (c.label_mode != LabelMode::none) {
      const double init = v.real("labels.init_target");
      if (!(init > 0.0 && init <= 1.0)) throw ConfigError("field 'labels.init_target': must lie in (0, 1]");
      if (!(v.real("labels.label_lr") >= 0.0)) throw ConfigError("field 'labels.label_lr': must be >= 0");
    }
    if (v.count("folds.k") < 2) throw ConfigError("field 'folds.k': must be >= 2");
    c.hash = v.hash();
    c.values = std::move(v);
    return c;
  }

  static ExperimentConfig load(const std::string& path) { return from(ConfigValues::load(path)); }
  static ExperimentConfig parse(const std::string& text) { return from(ConfigValues::parse(text)); }

  std::string header_line(std::uint64_t seed) const {
    return "# config=" + hash + " seed=" + std::to_string(seed);
  }
};

}  // namespace dynlab
