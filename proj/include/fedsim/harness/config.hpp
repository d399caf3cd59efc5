// Copyright 2026 The Fedsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Experiment configuration.
//
// The on-disk format is INI-like:
//
//   # comment
//   [fed]
//   clients = 30
//   fraction = 1/3
//
// Every key is addressed as "section.key" and has a default in the schema
// below, so a config file only lists what it changes. Command-line overrides
// use the same names (--fed.clients=30) and are applied last.

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/parallel.hpp"
#include "fedsim/data/dataset.hpp"
#include "fedsim/data/partition.hpp"
#include "fedsim/dp/accountant.hpp"
#include "fedsim/dp/mechanisms.hpp"
#include "fedsim/fed/engine.hpp"

namespace fedsim {

struct KeyDef {
  const char* key;
  const char* default_value;
  const char* help;
};

// Every recognised key, in dump order.
inline const std::vector<KeyDef>& config_schema() {
  static const std::vector<KeyDef> schema = {
      {"experiment.name", "custom", "experiment id written to every metrics row"},
      {"experiment.description", "", "free text"},
      {"experiment.maps_to", "", "table/figure this experiment reproduces"},
      {"experiment.seeds", "1,2,3", "run seeds (partition, init, sampling)"},
      {"data.source", "synthetic", "synthetic | csv | idx"},
      {"data.classes", "3", "number of classes (0 = infer from files)"},
      {"data.per_class", "1100", "synthetic examples per class, before holdout"},
      {"data.class_counts", "", "per-class totals, overrides per_class"},
      {"data.holdout_per_class", "100", "synthetic test examples per class"},
      {"data.input_dim", "2", "synthetic vector dimension"},
      {"data.input_side", "0", "synthetic image side (> 0 selects image mode)"},
      {"data.difficulty", "2.0", "class-mean separation in within-class std devs"},
      {"data.modes", "1", "clusters per class (1 or 2)"},
      {"data.seed", "7", "dataset seed, fixed across run seeds"},
      {"data.train_path", "", "csv file, or idx images file"},
      {"data.train_labels", "", "idx labels file"},
      {"data.test_path", "", "csv file, or idx images file"},
      {"data.test_labels", "", "idx labels file"},
      {"model.name", "mlp", "mlp | paper_cnn"},
      {"model.hidden", "32", "mlp hidden widths, comma separated (empty = logistic)"},
      {"model.precision", "f64", "f64 | f32"},
      {"fed.clients", "3", "K"},
      {"fed.fraction", "0.33", "C, a decimal or a/b"},
      {"fed.clients_per_round", "2", "override for m (0 = max(ceil(C K), 1))"},
      {"fed.local_epochs", "1", "E"},
      {"fed.batch_size", "20", "B"},
      {"fed.learning_rate", "0.02", "eta"},
      {"fed.rounds", "200", "T"},
      {"fed.eval_every", "1", "evaluate every n-th round (last round always)"},
      {"fed.partition", "iid", "iid | noniid1 | noniid2"},
      {"fed.workers", "1", "threads for client updates within a round"},
      {"privacy.enabled", "false", "turn on clipping, noise and accounting"},
      {"privacy.granularity", "client", "client | example"},
      {"privacy.clip_norm", "1.0", "S"},
      {"privacy.noise", "0.0", "z"},
      {"privacy.delta", "1e-5", "target delta"},
      {"privacy.conversion", "improved", "RDP to (eps, delta) conversion: improved | classic"},
      {"sweep.param", "", "key to sweep; join keys with + to zip several"},
      {"sweep.values", "", "comma separated; zipped values joined with :"},
      {"sweep.labels", "", "optional display labels, one per value"},
      {"output.dir", "", "run directory under the output root (default: experiment.name)"},
      {"output.record_timing", "false", "write wall-clock elapsed_ms (breaks byte determinism)"},
      {"output.jobs", "0", "sweep cells run in parallel (0 = available cores)"},
      {"output.checkpoints", "50,100,150,200", "rounds reported by summarize"},
      {"output.threshold", "0", "accuracy for rounds-to-threshold (0 = off)"},
  };
  return schema;
}

inline const KeyDef* find_key(std::string_view key) {
  for (const auto& d : config_schema()) {
    if (key == d.key) return &d;
  }
  return nullptr;
}

namespace config_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace config_detail

inline std::vector<std::string> split_list(std::string_view s, char sep = ',') {
  std::vector<std::string> out;
  if (config_detail::trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(config_detail::trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Resolved key -> value map. Starts at the schema defaults.
class Settings {
 public:
  Settings() {
    for (const auto& d : config_schema()) values_[d.key] = d.default_value;
  }

  const std::string& get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  void set(const std::string& key, std::string value) {
    if (!find_key(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = config_detail::trim(value);
  }

  // "section.key=value"
  void apply_override(std::string_view assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("override '" + std::string(assignment) + "' is not key=value");
    }
    set(config_detail::trim(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
  }

  // Parses INI text on top of the current values. `origin` names the source
  // in error messages.
  void merge_ini(std::string_view text, const std::string& origin = "<config>") {
    std::vector<std::string> problems;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string where = origin + ":" + std::to_string(line_no) + ": ";
      std::string line = config_detail::trim(raw);
      if (line.empty() || line[0] == '#' || line[0] == ';') continue;
      if (line.front() == '[') {
        if (line.back() != ']') {
          problems.push_back(where + "unterminated section header");
          continue;
        }
        section = config_detail::trim(std::string_view(line).substr(1, line.size() - 2));
        continue;
      }
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) {
        problems.push_back(where + "expected key = value");
        continue;
      }
      std::string key = config_detail::trim(std::string_view(line).substr(0, eq));
      std::string value = config_detail::trim(std::string_view(line).substr(eq + 1));
      // Trailing comments need whitespace before the marker.
      for (const char* marker : {" #", " ;", "\t#", "\t;"}) {
        const std::size_t c = value.find(marker);
        if (c != std::string::npos) value = config_detail::trim(value.substr(0, c));
      }
      if (!section.empty()) key = section + "." + key;
      if (!find_key(key)) {
        problems.push_back(where + "unknown key '" + key + "'");
        continue;
      }
      values_[key] = value;
    }
    if (!problems.empty()) {
      std::string msg = "config has " + std::to_string(problems.size()) + " problem(s):";
      for (const auto& p : problems) msg += "\n  " + p;
      throw ConfigError(msg);
    }
  }

  void merge_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    merge_ini(ss.str(), path);
  }

  // Sectioned dump in schema order; parses back to the same settings.
  std::string to_ini() const {
    std::string out, section;
    for (const auto& d : config_schema()) {
      const std::string key = d.key;
      const std::size_t dot = key.find('.');
      const std::string sec = key.substr(0, dot);
      if (sec != section) {
        if (!section.empty()) out += "\n";
        out += "[" + sec + "]\n";
        section = sec;
      }
      out += key.substr(dot + 1) + " = " + values_.at(key) + "\n";
    }
    return out;
  }

  bool operator==(const Settings&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

// Typed views -----------------------------------------------------------------

struct DataConfig {
  std::string source = "synthetic";
  SyntheticSpec synthetic;
  std::string train_path, train_labels, test_path, test_labels;
};

struct ModelConfig {
  std::string name = "mlp";
  std::vector<std::size_t> hidden{32};
  bool single_precision = false;
};

struct SweepSpec {
  std::vector<std::string> params;               // zipped keys
  std::vector<std::vector<std::string>> values;  // one tuple per cell
  std::vector<std::string> labels;               // one per cell
};

struct OutputConfig {
  std::string dir;
  bool record_timing = false;
  std::size_t jobs = 0;
  std::vector<std::size_t> checkpoints;
  double threshold = 0.0;
};

struct ExperimentConfig {
  std::string name, description, maps_to;
  std::vector<std::uint64_t> seeds;
  DataConfig data;
  ModelConfig model;
  RoundConfig round;
  PartitionKind partition = PartitionKind::kIid;
  std::optional<PrivacyConfig> privacy;
  DpConversion conversion = DpConversion::kImproved;
  SweepSpec sweep;
  OutputConfig output;
  Settings settings;  // the resolved source of all of the above
};

namespace config_detail {

// Collects every violation instead of stopping at the first.
class Reader {
 public:
  explicit Reader(const Settings& s) : s_(s) {}

  std::vector<std::string>& problems() { return problems_; }

  std::string str(const std::string& key) { return s_.get(key); }

  std::uint64_t u64(const std::string& key, std::uint64_t lo = 0) {
    return parse_u64(key, s_.get(key), lo);
  }

  std::size_t size(const std::string& key, std::size_t lo = 0) {
    return static_cast<std::size_t>(u64(key, lo));
  }

  double real(const std::string& key) { return parse_real(key, s_.get(key)); }

  bool boolean(const std::string& key) {
    std::string v = s_.get(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off" || v.empty()) return false;
    fail(key, "expected a boolean, got '" + s_.get(key) + "'");
    return false;
  }

  std::vector<std::size_t> sizes(const std::string& key, std::size_t lo = 0) {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(s_.get(key))) {
      out.push_back(static_cast<std::size_t>(parse_u64(key, item, lo)));
    }
    return out;
  }

  void fail(const std::string& key, const std::string& msg) {
    problems_.push_back(key + ": " + msg);
  }

  // Runs a validator that throws ConfigError and records its message.
  template <typename F>
  void check(const std::string& key, F&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      fail(key, e.what());
    }
  }

 private:
  std::uint64_t parse_u64(const std::string& key, const std::string& v, std::uint64_t lo) {
    if (v.empty() || !std::all_of(v.begin(), v.end(),
                                  [](unsigned char c) { return std::isdigit(c); })) {
      fail(key, "expected a non-negative integer, got '" + v + "'");
      return lo;
    }
    errno = 0;
    const unsigned long long x = std::strtoull(v.c_str(), nullptr, 10);
    if (errno == ERANGE) {
      fail(key, "integer out of range: " + v);
      return lo;
    }
    if (x < lo) fail(key, "must be >= " + std::to_string(lo) + ", got " + v);
    return x;
  }

  double parse_real(const std::string& key, const std::string& v) {
    const std::size_t slash = v.find('/');
    if (slash != std::string::npos) {
      const double a = parse_plain(key, config_detail::trim(std::string_view(v).substr(0, slash)));
      const double b = parse_plain(key, config_detail::trim(std::string_view(v).substr(slash + 1)));
      if (b == 0.0) {
        fail(key, "division by zero in '" + v + "'");
        return 0.0;
      }
      return a / b;
    }
    return parse_plain(key, v);
  }

  double parse_plain(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) {
      fail(key, "expected a number, got '" + v + "'");
      return 0.0;
    }
    return x;
  }

  const Settings& s_;
  std::vector<std::string> problems_;
};

}  // namespace config_detail

inline SweepSpec parse_sweep(const Settings& s, std::vector<std::string>* problems) {
  SweepSpec sweep;
  const std::string param = s.get("sweep.param");
  const auto values = split_list(s.get("sweep.values"));
  if (param.empty()) {
    if (!values.empty()) problems->push_back("sweep.values: set without sweep.param");
    return sweep;
  }
  sweep.params = split_list(param, '+');
  for (const auto& p : sweep.params) {
    if (!find_key(p)) {
      problems->push_back("sweep.param: '" + p + "' is not a config key");
    } else if (p.rfind("sweep.", 0) == 0 || p == "experiment.seeds" ||
               p == "experiment.name" || p.rfind("output.", 0) == 0) {
      problems->push_back("sweep.param: '" + p + "' cannot be swept");
    }
  }
  if (values.empty()) problems->push_back("sweep.values: empty for sweep.param = " + param);
  for (const auto& v : values) {
    auto tuple = split_list(v, ':');
    if (tuple.size() != sweep.params.size()) {
      problems->push_back("sweep.values: '" + v + "' has " + std::to_string(tuple.size()) +
                          " field(s), sweep.param names " +
                          std::to_string(sweep.params.size()));
      continue;
    }
    sweep.values.push_back(std::move(tuple));
  }
  sweep.labels = split_list(s.get("sweep.labels"));
  if (sweep.labels.empty()) {
    for (const auto& v : values) sweep.labels.push_back(v);
  } else if (sweep.labels.size() != values.size()) {
    problems->push_back("sweep.labels: " + std::to_string(sweep.labels.size()) +
                        " label(s) for " + std::to_string(values.size()) + " value(s)");
  }
  for (const auto& l : sweep.labels) {
    if (l.find_first_of(",\"\n") != std::string::npos) {
      problems->push_back("sweep.labels: '" + l + "' contains a comma, quote or newline");
    }
  }
  return sweep;
}

// Every violation found while turning settings into a typed config.
inline std::vector<std::string> config_problems(const Settings& s, ExperimentConfig* out) {
  config_detail::Reader r(s);
  ExperimentConfig cfg;
  cfg.settings = s;

  cfg.name = r.str("experiment.name");
  if (cfg.name.empty() || cfg.name.find_first_of(",\"\n/\\") != std::string::npos) {
    r.fail("experiment.name", "must be non-empty without commas, quotes or slashes");
  }
  cfg.description = r.str("experiment.description");
  cfg.maps_to = r.str("experiment.maps_to");
  for (const auto& item : split_list(s.get("experiment.seeds"))) {
    Settings tmp;
    tmp.set("experiment.seeds", item);
    config_detail::Reader one(tmp);
    cfg.seeds.push_back(one.u64("experiment.seeds"));
    for (auto& p : one.problems()) r.problems().push_back(p);
  }
  if (cfg.seeds.empty()) r.fail("experiment.seeds", "at least one seed is required");

  // data
  auto& d = cfg.data;
  d.source = r.str("data.source");
  if (d.source != "synthetic" && d.source != "csv" && d.source != "idx") {
    r.fail("data.source", "expected synthetic | csv | idx, got '" + d.source + "'");
  }
  auto& syn = d.synthetic;
  syn.num_classes = r.size("data.classes");
  syn.per_class = r.size("data.per_class");
  syn.class_counts = r.sizes("data.class_counts");
  syn.holdout_per_class = r.size("data.holdout_per_class");
  syn.input_dim = r.size("data.input_dim");
  syn.input_side = r.size("data.input_side");
  syn.difficulty = r.real("data.difficulty");
  syn.modes_per_class = r.size("data.modes");
  syn.seed = r.u64("data.seed");
  d.train_path = r.str("data.train_path");
  d.train_labels = r.str("data.train_labels");
  d.test_path = r.str("data.test_path");
  d.test_labels = r.str("data.test_labels");
  if (d.source == "synthetic") {
    if (syn.num_classes < 2) r.fail("data.classes", "synthetic data needs >= 2 classes");
    if (syn.class_counts.empty() && syn.per_class < 2) {
      r.fail("data.per_class", "must be >= 2");
    }
    if (!syn.class_counts.empty() && syn.class_counts.size() != syn.num_classes) {
      r.fail("data.class_counts", "needs one entry per class");
    }
    if (!(syn.difficulty > 0.0)) r.fail("data.difficulty", "must be positive");
    if (syn.modes_per_class < 1 || syn.modes_per_class > 2) r.fail("data.modes", "must be 1 or 2");
    if (syn.input_side == 0 && syn.input_dim == 0) r.fail("data.input_dim", "must be positive");
    const std::size_t smallest =
        syn.class_counts.empty() ? syn.per_class
                                 : *std::min_element(syn.class_counts.begin(), syn.class_counts.end());
    if (syn.holdout_per_class >= smallest && smallest > 0) {
      r.fail("data.holdout_per_class", "leaves no training data");
    }
  } else {
    if (d.train_path.empty()) r.fail("data.train_path", "required for source " + d.source);
    if (d.test_path.empty()) r.fail("data.test_path", "required for source " + d.source);
    if (d.source == "idx") {
      if (d.train_labels.empty()) r.fail("data.train_labels", "required for idx");
      if (d.test_labels.empty()) r.fail("data.test_labels", "required for idx");
    }
  }

  // model
  cfg.model.name = r.str("model.name");
  if (cfg.model.name != "mlp" && cfg.model.name != "paper_cnn") {
    r.fail("model.name", "expected mlp | paper_cnn, got '" + cfg.model.name + "'");
  }
  cfg.model.hidden = r.sizes("model.hidden", 1);
  const std::string prec = r.str("model.precision");
  if (prec != "f64" && prec != "f32") r.fail("model.precision", "expected f64 | f32");
  cfg.model.single_precision = prec == "f32";
  if (cfg.model.name == "paper_cnn" && d.source == "synthetic" && syn.input_side < 8) {
    r.fail("data.input_side", "paper_cnn needs image data with side >= 8");
  }

  // fed
  auto& rc = cfg.round;
  rc.clients = r.size("fed.clients", 1);
  rc.fraction = r.real("fed.fraction");
  const std::size_t m = r.size("fed.clients_per_round");
  rc.clients_per_round = m == 0 ? std::nullopt : std::optional<std::size_t>(m);
  rc.local_epochs = r.size("fed.local_epochs", 1);
  rc.batch_size = r.size("fed.batch_size", 1);
  rc.learning_rate = r.real("fed.learning_rate");
  rc.rounds = r.size("fed.rounds");
  rc.eval_every = r.size("fed.eval_every", 1);
  rc.workers = r.size("fed.workers", 1);
  const std::size_t fed_problems = r.problems().size();
  if (!(rc.fraction > 0.0 && rc.fraction <= 1.0)) r.fail("fed.fraction", "C must lie in (0, 1]");
  if (!(rc.learning_rate >= 0.0)) r.fail("fed.learning_rate", "must be non-negative");
  if (m > rc.clients) {
    r.fail("fed.clients_per_round", std::to_string(m) + " exceeds K = " + std::to_string(rc.clients));
  }
  if (r.problems().size() == fed_problems) r.check("fed", [&] { rc.validate(); });
  r.check("fed.partition", [&] { cfg.partition = parse_partition(r.str("fed.partition")); });
  if (d.source == "synthetic") {
    std::size_t n_train = 0;
    for (std::size_t c = 0; c < syn.num_classes; ++c) {
      const std::size_t total = syn.class_counts.size() == syn.num_classes ? syn.class_counts[c]
                                                                           : syn.per_class;
      if (total > syn.holdout_per_class) n_train += total - syn.holdout_per_class;
    }
    if (rc.clients > n_train) {
      r.fail("fed.clients", "K = " + std::to_string(rc.clients) + " exceeds the " +
                                std::to_string(n_train) + " training examples");
    }
  }

  // privacy
  if (r.boolean("privacy.enabled")) {
    PrivacyConfig p;
    p.clip_norm = r.real("privacy.clip_norm");
    p.noise_multiplier = r.real("privacy.noise");
    p.delta = r.real("privacy.delta");
    r.check("privacy.granularity", [&] { p.granularity = parse_granularity(r.str("privacy.granularity")); });
    const std::size_t dp_problems = r.problems().size();
    if (!(p.clip_norm > 0.0)) r.fail("privacy.clip_norm", "must be positive");
    if (!(p.noise_multiplier >= 0.0)) r.fail("privacy.noise", "must be non-negative");
    if (!(p.delta > 0.0 && p.delta < 1.0)) r.fail("privacy.delta", "must lie in (0, 1)");
    if (r.problems().size() == dp_problems) r.check("privacy", [&] { p.validate(); });
    cfg.privacy = p;
  }
  const std::string conv = r.str("privacy.conversion");
  if (conv == "improved") {
    cfg.conversion = DpConversion::kImproved;
  } else if (conv == "classic") {
    cfg.conversion = DpConversion::kClassic;
  } else {
    r.fail("privacy.conversion", "expected improved | classic, got '" + conv + "'");
  }

  cfg.sweep = parse_sweep(s, &r.problems());

  cfg.output.dir = r.str("output.dir");
  if (cfg.output.dir.empty()) cfg.output.dir = cfg.name;
  cfg.output.record_timing = r.boolean("output.record_timing");
  cfg.output.jobs = r.size("output.jobs");
  cfg.output.checkpoints = r.sizes("output.checkpoints", 1);
  cfg.output.threshold = r.real("output.threshold");
  if (cfg.output.threshold < 0.0 || cfg.output.threshold > 1.0) {
    r.fail("output.threshold", "must lie in [0, 1]");
  }

  if (out) *out = std::move(cfg);
  return std::move(r.problems());
}

inline std::string format_problems(const std::vector<std::string>& problems) {
  std::string msg = "invalid configuration (" + std::to_string(problems.size()) + " problem(s)):";
  for (const auto& p : problems) msg += "\n  " + p;
  return msg;
}

// Throws ConfigError listing every violation.
inline ExperimentConfig resolve_config(const Settings& s) {
  ExperimentConfig cfg;
  const auto problems = config_problems(s, &cfg);
  if (!problems.empty()) throw ConfigError(format_problems(problems));
  return cfg;
}

struct SweepCell {
  std::string label;  // value of the CSV "sweep" column
  ExperimentConfig config;
};

// One cell per sweep value (a single unlabeled cell without a sweep). Every
// cell is validated; the first invalid one aborts with its report.
inline std::vector<SweepCell> expand_sweep(const ExperimentConfig& cfg) {
  std::vector<SweepCell> cells;
  if (cfg.sweep.params.empty()) {
    cells.push_back({"", cfg});
    return cells;
  }
  for (std::size_t i = 0; i < cfg.sweep.values.size(); ++i) {
    Settings s = cfg.settings;
    for (std::size_t j = 0; j < cfg.sweep.params.size(); ++j) {
      s.set(cfg.sweep.params[j], cfg.sweep.values[i][j]);
    }
    ExperimentConfig cell;
    auto problems = config_problems(s, &cell);
    if (!problems.empty()) {
      for (auto& p : problems) p = "sweep value '" + cfg.sweep.labels[i] + "': " + p;
      throw ConfigError(format_problems(problems));
    }
    cells.push_back({cfg.sweep.labels[i], std::move(cell)});
  }
  return cells;
}

}  // namespace fedsim
