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

// Runs sweep cells x seeds and produces the metrics CSV plus a manifest.
//
// Jobs run on a bounded pool; each job writes only its own row buffer and the
// buffers are concatenated in (cell, seed) order, so the CSV does not depend
// on the pool size. A run that diverges or fails keeps the rows it produced
// and gets one extra row with status "diverged" or "error".

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/common/parallel.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/data/dataset.hpp"
#include "fedsim/data/io.hpp"
#include "fedsim/data/partition.hpp"
#include "fedsim/dp/accountant.hpp"
#include "fedsim/fed/engine.hpp"
#include "fedsim/harness/config.hpp"
#include "fedsim/harness/metrics.hpp"
#include "fedsim/model/model_spec.hpp"
#include "fedsim/version.hpp"

namespace fedsim {

inline constexpr const char* kOutputRootEnv = "FEDSIM_OUTPUT_ROOT";

// $FEDSIM_OUTPUT_ROOT, else "runs".
inline std::string output_root_from_env() {
  const char* v = std::getenv(kOutputRootEnv);
  return v && *v ? std::string(v) : std::string("runs");
}

template <Real T>
TrainTest<T> load_data(const DataConfig& d) {
  if (d.source == "synthetic") return generate_synthetic<T>(d.synthetic);
  const std::size_t classes = d.synthetic.num_classes;
  TrainTest<T> out;
  if (d.source == "csv") {
    Shape image;
    if (d.synthetic.input_side > 0) image = {1, d.synthetic.input_side, d.synthetic.input_side};
    out.train = load_csv<T>(d.train_path, classes, Split::kTrain, image);
    out.test = load_csv<T>(d.test_path, out.train.num_classes(), Split::kTest, image);
  } else if (d.source == "idx") {
    out.train = load_idx<T>(d.train_path, d.train_labels, classes, Split::kTrain);
    out.test = load_idx<T>(d.test_path, d.test_labels, out.train.num_classes(), Split::kTest);
  } else {
    throw ConfigError("unknown data.source '" + d.source + "'");
  }
  if (out.train.feature_shape() != out.test.feature_shape()) {
    throw StructuralError("train features " + shape_string(out.train.feature_shape()) +
                          " do not match test features " +
                          shape_string(out.test.feature_shape()));
  }
  if (out.train.empty() || out.test.empty()) throw ValidationError("train and test must be non-empty");
  return out;
}

inline ModelSpec build_model(const ModelConfig& m, const Shape& feature_shape,
                             std::size_t num_classes) {
  if (m.name == "mlp") return build_mlp(shape_size(feature_shape), m.hidden, num_classes);
  if (m.name == "paper_cnn") {
    if (feature_shape.size() != 3 || feature_shape[0] != 1 || feature_shape[1] != feature_shape[2]) {
      throw ConfigError("paper_cnn needs 1 x s x s images, data has " +
                        shape_string(feature_shape));
    }
    return build_paper_cnn(feature_shape[1], num_classes);
  }
  throw ConfigError("unknown model '" + m.name + "'");
}

struct RunOptions {
  std::optional<std::size_t> jobs;  // overrides output.jobs
  std::ostream* log = nullptr;      // progress lines
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<std::string> warnings;
  std::string csv;
  std::string manifest;
  std::string metrics_path;   // set by run_experiment
  std::string manifest_path;  // set by run_experiment
};

namespace runner_detail {

inline std::string data_key(const ExperimentConfig& c) {
  std::string key = c.model.single_precision ? "f32" : "f64";
  for (const auto& d : config_schema()) {
    const std::string k = d.key;
    if (k.rfind("data.", 0) == 0) key += "|" + c.settings.get(k);
  }
  return key;
}

struct JobOutput {
  std::vector<MetricsRow> rows;
  std::vector<std::string> warnings;
};

template <Real T>
JobOutput run_job(const SweepCell& cell, std::uint64_t seed, const TrainTest<T>& data) {
  const ExperimentConfig& c = cell.config;
  JobOutput out;
  const std::string where = c.name + (cell.label.empty() ? "" : "/" + cell.label);
  auto make_row = [&](std::size_t round) {
    MetricsRow r;
    r.experiment = c.name;
    r.sweep = cell.label;
    r.seed = seed;
    r.round = round;
    return r;
  };
  try {
    RoundConfig rc = c.round;
    rc.seed = seed;
    const ModelSpec spec = build_model(c.model, data.train.feature_shape(), data.train.num_classes());
    const auto shards = partition(data.train, PartitionScheme{c.partition, rc.clients, seed});
    if (c.partition == PartitionKind::kNonIid1) {
      const std::size_t labels = max_distinct_labels(shards, data.train.labels());
      if (labels > 1) {
        out.warnings.push_back(where + ": noniid1 realized up to " + std::to_string(labels) +
                               " classes per client (class sizes do not align with K)");
      }
    }
    if (c.privacy) {
      const auto& p = *c.privacy;
      const double units = p.granularity == DpGranularity::kClient
                               ? static_cast<double>(rc.clients)
                               : static_cast<double>(data.train.size());
      if (p.delta >= 1.0 / units) {
        out.warnings.push_back(where + ": delta " + metrics_detail::fmt("%g", p.delta) +
                               " >= 1/n for n = " + metrics_detail::fmt("%g", units) +
                               " privacy units");
      }
      if (p.noise_multiplier > 0.0 && rc.rounds > 0) {
        const auto plan = accounting_plan(rc, p, shards);
        const AccountantState st(plan.q, p.noise_multiplier);
        const auto e = compose_and_convert(st, rc.rounds * plan.steps_per_round, p.delta,
                                           c.conversion);
        if (e.grid_extended) {
          out.warnings.push_back(where + ": epsilon optimum at the edge of the RDP order grid; "
                                 "extended to order " + metrics_detail::fmt("%g", e.order));
        }
      }
    }
    TrainingOptions opts;
    opts.record_timing = c.output.record_timing;
    opts.conversion = c.conversion;
    opts.on_record = [&](const RoundRecord& rec) {
      MetricsRow r = make_row(rec.round);
      r.accuracy = rec.accuracy;
      r.loss = rec.loss;
      r.epsilon = rec.epsilon;
      r.elapsed_ms = rec.elapsed_ms;
      out.rows.push_back(std::move(r));
    };
    run_training(data.train, data.test, shards, spec, rc, c.privacy, opts);
  } catch (const DivergedError& e) {
    MetricsRow r = make_row(e.round());
    r.status = "diverged";
    out.rows.push_back(std::move(r));
    out.warnings.push_back(where + " seed " + std::to_string(seed) + ": " + e.what());
  } catch (const Error& e) {
    MetricsRow r = make_row(0);
    r.status = "error";
    out.rows.push_back(std::move(r));
    out.warnings.push_back(where + " seed " + std::to_string(seed) + ": " + e.what());
  }
  return out;
}

}  // namespace runner_detail

inline std::string manifest_text(const ExperimentConfig& cfg, std::size_t cells,
                                 const std::string& csv,
                                 const std::vector<std::string>& warnings) {
  const std::string ini = cfg.settings.to_ini();
  char hash[32];
  std::string out = "# fedsim run manifest\n";
  out += "# version: " + std::string(kVersion) + "\n";
  out += "# experiment: " + cfg.name + "\n";
  if (!cfg.maps_to.empty()) out += "# maps_to: " + cfg.maps_to + "\n";
  out += "# runs: " + std::to_string(cells) + " sweep value(s) x " +
         std::to_string(cfg.seeds.size()) + " seed(s)\n";
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(ini)));
  out += "# config_hash: fnv1a64:" + std::string(hash) + "\n";
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(csv)));
  out += "# metrics_hash: fnv1a64:" + std::string(hash) + "\n";
  for (const auto& w : warnings) out += "# warning: " + w + "\n";
  out += "\n" + ini;
  return out;
}

// Runs everything in memory.
inline RunResult execute_experiment(const ExperimentConfig& cfg, const RunOptions& ropt = {}) {
  const auto cells = expand_sweep(cfg);

  // Each distinct dataset is built once, up front.
  std::map<std::string, TrainTest<double>> data64;
  std::map<std::string, TrainTest<float>> data32;
  for (const auto& cell : cells) {
    const std::string key = runner_detail::data_key(cell.config);
    if (cell.config.model.single_precision) {
      if (!data32.count(key)) data32.emplace(key, load_data<float>(cell.config.data));
    } else {
      if (!data64.count(key)) data64.emplace(key, load_data<double>(cell.config.data));
    }
  }

  struct Job {
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::uint64_t s : cells[i].config.seeds) jobs.push_back({i, s});
  }
  std::vector<runner_detail::JobOutput> outputs(jobs.size());
  std::size_t workers = ropt.jobs.value_or(cfg.output.jobs);
  if (workers == 0) workers = default_workers();
  std::mutex log_mu;
  parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const auto& cell = cells[jobs[j].cell];
    const std::string key = runner_detail::data_key(cell.config);
    if (cell.config.model.single_precision) {
      outputs[j] = runner_detail::run_job<float>(cell, jobs[j].seed, data32.at(key));
    } else {
      outputs[j] = runner_detail::run_job<double>(cell, jobs[j].seed, data64.at(key));
    }
    if (ropt.log) {
      std::string line = "[" + cell.config.name + "] " +
                         (cell.label.empty() ? std::string() : cell.label + " ") + "seed " +
                         std::to_string(jobs[j].seed) + ": ";
      const auto& rows = outputs[j].rows;
      if (rows.empty()) {
        line += "no rounds";
      } else if (!rows.back().ok()) {
        line += rows.back().status;
      } else {
        line += "round " + std::to_string(rows.back().round) + " accuracy " +
                metrics_detail::fmt("%.4f", rows.back().accuracy.value_or(0.0));
        if (rows.back().epsilon) line += " epsilon " + metrics_detail::opt_eps(rows.back().epsilon);
      }
      std::lock_guard<std::mutex> lock(log_mu);
      *ropt.log << line << "\n";
    }
  });

  RunResult result;
  for (auto& o : outputs) {
    for (auto& r : o.rows) result.rows.push_back(std::move(r));
    for (auto& w : o.warnings) {
      if (std::find(result.warnings.begin(), result.warnings.end(), w) == result.warnings.end()) {
        result.warnings.push_back(std::move(w));
      }
    }
  }
  result.csv = format_metrics_csv(result.rows);
  result.manifest = manifest_text(cfg, cells.size(), result.csv, result.warnings);
  return result;
}

// Runs and writes <root>/<output.dir>/{metrics.csv, manifest.txt}.
inline RunResult run_experiment(const ExperimentConfig& cfg, const std::string& output_root,
                                const RunOptions& ropt = {}) {
  RunResult result = execute_experiment(cfg, ropt);
  const std::filesystem::path dir = std::filesystem::path(output_root) / cfg.output.dir;
  std::filesystem::create_directories(dir);
  const auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
  };
  result.metrics_path = (dir / "metrics.csv").string();
  result.manifest_path = (dir / "manifest.txt").string();
  write(result.metrics_path, result.csv);
  write(result.manifest_path, result.manifest);
  return result;
}

}  // namespace fedsim
