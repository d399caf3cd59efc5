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

// Metrics CSV (one row per evaluated round per run) and checkpoint summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/harness/config.hpp"

namespace fedsim {

inline constexpr const char* kMetricsHeader =
    "experiment,sweep,seed,round,accuracy,loss,epsilon,elapsed_ms,status";

struct MetricsRow {
  std::string experiment;
  std::string sweep;
  std::uint64_t seed = 0;
  std::size_t round = 0;
  std::optional<double> accuracy;
  std::optional<double> loss;
  std::optional<double> epsilon;
  double elapsed_ms = 0.0;
  std::string status = "ok";  // ok | diverged | error

  bool ok() const { return status == "ok"; }
  bool operator==(const MetricsRow&) const = default;
};

namespace metrics_detail {

inline std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

inline std::string opt_fixed(const std::optional<double>& v) {
  return v ? fmt("%.6f", *v) : std::string();
}

inline std::string opt_eps(const std::optional<double>& v) {
  if (!v) return {};
  if (std::isinf(*v)) return "inf";
  return fmt("%.6g", *v);
}

inline std::optional<double> parse_opt(const std::string& s, std::size_t line,
                                       const std::string& what) {
  if (s.empty()) return std::nullopt;
  if (s == "inf") return kInfinity;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw IoError("bad " + what + " value '" + s + "'", line);
  return v;
}

inline std::uint64_t parse_uint(const std::string& s, std::size_t line, const std::string& what) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw IoError("bad " + what + " value '" + s + "'", line);
  }
  return std::strtoull(s.c_str(), nullptr, 10);
}

}  // namespace metrics_detail

inline std::string format_row(const MetricsRow& r) {
  using namespace metrics_detail;
  return r.experiment + "," + r.sweep + "," + std::to_string(r.seed) + "," +
         std::to_string(r.round) + "," + opt_fixed(r.accuracy) + "," + opt_fixed(r.loss) + "," +
         opt_eps(r.epsilon) + "," + fmt("%.3f", r.elapsed_ms) + "," + r.status;
}

inline std::string format_metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) out += format_row(r) + "\n";
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(std::istream& in) {
  using namespace metrics_detail;
  std::string line;
  if (!std::getline(in, line)) throw IoError("metrics file is empty", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetricsHeader) {
    throw IoError("metrics header must be '" + std::string(kMetricsHeader) + "'", 1);
  }
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 9) {
      throw IoError("expected 9 fields, got " + std::to_string(f.size()), line_no);
    }
    MetricsRow r;
    r.experiment = f[0];
    r.sweep = f[1];
    r.seed = parse_uint(f[2], line_no, "seed");
    r.round = parse_uint(f[3], line_no, "round");
    r.accuracy = parse_opt(f[4], line_no, "accuracy");
    r.loss = parse_opt(f[5], line_no, "loss");
    r.epsilon = parse_opt(f[6], line_no, "epsilon");
    r.elapsed_ms = parse_opt(f[7], line_no, "elapsed_ms").value_or(0.0);
    r.status = f[8];
    if (r.accuracy && (*r.accuracy < 0.0 || *r.accuracy > 1.0)) {
      throw IoError("accuracy outside [0, 1]", line_no);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metrics file " + path);
  return parse_metrics_csv(in);
}

// Summaries -------------------------------------------------------------------

struct SeriesKey {
  std::string experiment;
  std::string sweep;
  bool operator==(const SeriesKey&) const = default;
};

// Rows grouped by (experiment, sweep) in order of first appearance, then by
// seed. Only rows with status ok and a value in `column` are kept.
struct SeriesGroup {
  SeriesKey key;
  std::vector<std::uint64_t> seeds;
  // per seed: round -> value
  std::vector<std::map<std::size_t, double>> curves;
  std::size_t failed_runs = 0;
};

inline std::optional<double> column_value(const MetricsRow& r, const std::string& column) {
  if (column == "accuracy") return r.accuracy;
  if (column == "loss") return r.loss;
  if (column == "epsilon") return r.epsilon;
  if (column == "elapsed_ms") return r.elapsed_ms;
  throw ChartError("unknown metrics column '" + column +
                   "' (expected accuracy | loss | epsilon | elapsed_ms)");
}

inline std::vector<SeriesGroup> group_series(const std::vector<MetricsRow>& rows,
                                             const std::string& column) {
  std::vector<SeriesGroup> groups;
  for (const auto& r : rows) {
    const SeriesKey key{r.experiment, r.sweep};
    auto g = std::find_if(groups.begin(), groups.end(), [&](auto& x) { return x.key == key; });
    if (g == groups.end()) {
      groups.push_back({key, {}, {}, 0});
      g = groups.end() - 1;
    }
    auto s = std::find(g->seeds.begin(), g->seeds.end(), r.seed);
    if (s == g->seeds.end()) {
      g->seeds.push_back(r.seed);
      g->curves.emplace_back();
      s = g->seeds.end() - 1;
    }
    if (!r.ok()) {
      ++g->failed_runs;
      continue;
    }
    const auto v = column_value(r, column);
    if (v) g->curves[static_cast<std::size_t>(s - g->seeds.begin())][r.round] = *v;
  }
  return groups;
}

struct Stat {
  double mean = 0.0;
  double spread = 0.0;  // population std dev over seeds
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;
};

inline Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - s.mean) * (x - s.mean);
  s.spread = std::sqrt(ss / static_cast<double>(xs.size()));
  return s;
}

// Per-round statistic over the seeds that have a value at that round.
inline std::map<std::size_t, Stat> mean_curve(const SeriesGroup& g) {
  std::map<std::size_t, std::vector<double>> by_round;
  for (const auto& c : g.curves) {
    for (const auto& [round, v] : c) by_round[round].push_back(v);
  }
  std::map<std::size_t, Stat> out;
  for (const auto& [round, xs] : by_round) out[round] = stat_of(xs);
  return out;
}

struct SummaryRow {
  SeriesKey key;
  std::vector<std::optional<Stat>> at;  // one per checkpoint
  std::optional<Stat> final_value;      // each seed's last round
  std::optional<std::size_t> rounds_to_threshold;
  std::size_t failed_runs = 0;
};

struct Summary {
  std::string column = "accuracy";
  std::vector<std::size_t> checkpoints;
  std::optional<double> threshold;
  std::vector<SummaryRow> rows;
  std::vector<std::string> missing;  // "sweep @ round" that had no data
};

// Checkpoints past a run's end are listed in `missing`, not fatal.
// rounds_to_threshold is the first round whose mean over seeds reaches the
// threshold, counting only rounds every seed reported.
inline Summary summarize(const std::vector<MetricsRow>& rows,
                         const std::vector<std::size_t>& checkpoints,
                         std::optional<double> threshold = std::nullopt,
                         const std::string& column = "accuracy") {
  Summary out{column, checkpoints, threshold, {}, {}};
  for (const auto& g : group_series(rows, column)) {
    SummaryRow row{g.key, {}, std::nullopt, std::nullopt, g.failed_runs};
    const auto curve = mean_curve(g);
    for (std::size_t cp : checkpoints) {
      const auto it = curve.find(cp);
      if (it == curve.end()) {
        row.at.push_back(std::nullopt);
        out.missing.push_back(g.key.experiment + "/" + g.key.sweep + " @ round " +
                              std::to_string(cp));
      } else {
        row.at.push_back(it->second);
      }
    }
    std::vector<double> finals;
    for (const auto& c : g.curves) {
      if (!c.empty()) finals.push_back(c.rbegin()->second);
    }
    if (!finals.empty()) row.final_value = stat_of(finals);
    if (threshold) {
      const std::size_t n_seeds = g.curves.size();
      for (const auto& [round, st] : curve) {
        if (st.count == n_seeds && st.mean >= *threshold) {
          row.rounds_to_threshold = round;
          break;
        }
      }
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

inline std::string format_summary_text(const Summary& s) {
  using metrics_detail::fmt;
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head = {"experiment", "sweep"};
  for (std::size_t cp : s.checkpoints) head.push_back("r" + std::to_string(cp));
  head.push_back("final");
  if (s.threshold) head.push_back("rounds>=" + fmt("%.3g", *s.threshold));
  table.push_back(head);
  auto cell = [](const std::optional<Stat>& st) {
    if (!st) return std::string("-");
    return fmt("%.4f", st->mean) + " +- " + fmt("%.4f", st->spread);
  };
  for (const auto& r : s.rows) {
    std::vector<std::string> line = {r.key.experiment, r.key.sweep.empty() ? "-" : r.key.sweep};
    for (const auto& st : r.at) line.push_back(cell(st));
    line.push_back(cell(r.final_value));
    if (s.threshold) {
      line.push_back(r.rounds_to_threshold ? std::to_string(*r.rounds_to_threshold) : "never");
    }
    table.push_back(std::move(line));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : table) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (const auto& line : table) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      out += line[i];
      if (i + 1 < line.size()) out += std::string(width[i] - line[i].size() + 2, ' ');
    }
    out += "\n";
  }
  for (const auto& m : s.missing) out += "missing: " + m + "\n";
  for (const auto& r : s.rows) {
    if (r.failed_runs) {
      out += "failed: " + r.key.experiment + "/" + r.key.sweep + " (" +
             std::to_string(r.failed_runs) + " run(s))\n";
    }
  }
  return out;
}

// Long format: experiment,sweep,round,mean,spread,seeds ("final" as round for
// the last-round statistic).
inline std::string format_summary_csv(const Summary& s) {
  using metrics_detail::fmt;
  std::string out = "experiment,sweep,round,mean,spread,seeds\n";
  for (const auto& r : s.rows) {
    auto emit = [&](const std::string& round, const std::optional<Stat>& st) {
      out += r.key.experiment + "," + r.key.sweep + "," + round + ",";
      if (st) {
        out += fmt("%.6f", st->mean) + "," + fmt("%.6f", st->spread) + "," +
               std::to_string(st->count) + "\n";
      } else {
        out += ",,0\n";
      }
    };
    for (std::size_t i = 0; i < s.checkpoints.size(); ++i) {
      emit(std::to_string(s.checkpoints[i]), r.at[i]);
    }
    emit("final", r.final_value);
  }
  return out;
}

}  // namespace fedsim
