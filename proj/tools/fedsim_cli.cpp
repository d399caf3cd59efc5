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

// fedsim command-line tool.
//
//   fedsim run <config-file | preset> [--paper-scale] [--jobs N]
//              [--output-root DIR] [--set key=value]... [--section.key=value]...
//   fedsim chart <metrics.csv> [--out DIR] [--column accuracy]
//   fedsim summarize <metrics.csv> [--checkpoints 50,100] [--threshold 0.74]
//   fedsim account --q 0.333 --noise 1.3 --rounds 1000 --delta 1e-5
//   fedsim presets list | presets show E1

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedsim/fedsim.hpp"

namespace {

using fedsim::Settings;

// --fed.clients=30 and --fed.clients 30 both set fed.clients.
std::vector<std::string> key_overrides(const std::vector<std::string>& extras) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.rfind("--", 0) != 0) throw fedsim::ConfigError("unexpected argument '" + a + "'");
    std::string body = a.substr(2);
    if (body.find('=') == std::string::npos) {
      if (i + 1 >= extras.size()) throw fedsim::ConfigError("missing value for " + a);
      body += "=" + extras[++i];
    }
    out.push_back(body);
  }
  return out;
}

Settings load_settings(const std::string& source, bool paper_scale) {
  if (std::filesystem::exists(source)) {
    if (paper_scale) throw fedsim::ConfigError("--paper-scale applies to presets only");
    Settings s;
    s.merge_file(source);
    return s;
  }
  if (fedsim::find_preset(source)) return fedsim::preset_settings(source, paper_scale);
  throw fedsim::ConfigError("'" + source + "' is neither a config file nor a preset id");
}

std::vector<std::size_t> parse_checkpoints(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : fedsim::split_list(s)) {
    if (item.empty() || item.find_first_not_of("0123456789") != std::string::npos) {
      throw fedsim::ConfigError("bad checkpoint '" + item + "'");
    }
    out.push_back(std::stoul(item));
  }
  return out;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw fedsim::IoError("cannot write " + path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fedsim: desk-scale federated learning with differential privacy"};
  app.require_subcommand(1);
  app.set_version_flag("--version", fedsim::kVersion);

  // run
  auto* run = app.add_subcommand("run", "run a config file or preset, write metrics + manifest");
  std::string run_source, output_root;
  std::vector<std::string> sets;
  bool paper_scale = false, dry_run = false, with_chart = false;
  std::size_t jobs = 0;
  run->add_option("config", run_source, "config file or preset id (E1..E6)")->required();
  run->add_flag("--paper-scale", paper_scale, "preset at paper scale (K up to 300, T=1000)");
  run->add_option("--jobs", jobs, "parallel runs (0 = config value)");
  run->add_option("--output-root", output_root,
                  std::string("output root (default $") + fedsim::kOutputRootEnv + " or ./runs)");
  run->add_option("--set", sets, "key=value override, repeatable");
  run->add_flag("--dry-run", dry_run, "print the resolved config and stop");
  run->add_flag("--chart", with_chart, "also render the accuracy chart");
  run->allow_extras();

  // chart
  auto* chart = app.add_subcommand("chart", "render SVG charts from a metrics CSV");
  std::string chart_metrics, chart_out, chart_column = "accuracy";
  chart->add_option("metrics", chart_metrics, "metrics.csv")->required();
  chart->add_option("--out", chart_out, "output directory (default: next to the metrics)");
  chart->add_option("--column", chart_column, "accuracy | loss | epsilon | elapsed_ms");

  // summarize
  auto* summ = app.add_subcommand("summarize", "accuracy at checkpoint rounds, mean +- sd over seeds");
  std::string summ_metrics, summ_checkpoints = "50,100,150,200", summ_csv, summ_column = "accuracy";
  std::optional<double> summ_threshold;
  summ->add_option("metrics", summ_metrics, "metrics.csv")->required();
  summ->add_option("--checkpoints", summ_checkpoints, "comma-separated rounds");
  summ->add_option("--threshold", summ_threshold, "also report rounds to reach this accuracy");
  summ->add_option("--csv", summ_csv, "write the summary as CSV too");
  summ->add_option("--column", summ_column, "metric column");

  // account
  auto* acct = app.add_subcommand("account", "epsilon of the sampled Gaussian mechanism");
  double q = 0.0, noise = 0.0, delta = 1e-5;
  std::size_t rounds = 0, steps_per_round = 1;
  std::string conversion = "improved";
  acct->add_option("--q", q, "sampling fraction in (0, 1]")->required();
  acct->add_option("--noise", noise, "noise multiplier z")->required();
  acct->add_option("--rounds", rounds, "rounds T")->required();
  acct->add_option("--delta", delta, "target delta");
  acct->add_option("--steps-per-round", steps_per_round, "compositions per round");
  acct->add_option("--conversion", conversion, "improved | classic")
      ->check(CLI::IsMember({"improved", "classic"}));

  // presets
  auto* pre = app.add_subcommand("presets", "built-in experiments");
  pre->require_subcommand(1);
  auto* pre_list = pre->add_subcommand("list", "list presets");
  auto* pre_show = pre->add_subcommand("show", "print a preset as a config file");
  std::string show_id;
  bool show_paper = false;
  pre_show->add_option("id", show_id, "preset id")->required();
  pre_show->add_flag("--paper-scale", show_paper, "paper-scale variant");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      Settings s = load_settings(run_source, paper_scale);
      for (const auto& kv : sets) s.apply_override(kv);
      for (const auto& kv : key_overrides(run->remaining())) s.apply_override(kv);
      const auto cfg = fedsim::resolve_config(s);
      if (dry_run) {
        std::cout << s.to_ini();
        return 0;
      }
      const std::string root = output_root.empty() ? fedsim::output_root_from_env() : output_root;
      fedsim::RunOptions ropt;
      if (jobs > 0) ropt.jobs = jobs;
      ropt.log = &std::cerr;
      const auto result = fedsim::run_experiment(cfg, root, ropt);
      for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << "metrics:  " << result.metrics_path << "\n";
      std::cout << "manifest: " << result.manifest_path << "\n";
      if (with_chart) {
        const auto dir = std::filesystem::path(result.metrics_path).parent_path().string();
        for (const auto& p : fedsim::render_charts(result.metrics_path, dir)) {
          std::cout << "chart:    " << p << "\n";
        }
      }
      const auto summary = fedsim::summarize(
          result.rows, cfg.output.checkpoints,
          cfg.output.threshold > 0.0 ? std::optional<double>(cfg.output.threshold) : std::nullopt);
      std::cout << "\n" << fedsim::format_summary_text(summary);
    } else if (*chart) {
      fedsim::ChartOptions opt;
      opt.column = chart_column;
      const std::string dir =
          chart_out.empty() ? std::filesystem::path(chart_metrics).parent_path().string() : chart_out;
      for (const auto& p : fedsim::render_charts(chart_metrics, dir.empty() ? "." : dir, opt)) {
        std::cout << p << "\n";
      }
    } else if (*summ) {
      const auto rows = fedsim::read_metrics_csv(summ_metrics);
      const auto summary = fedsim::summarize(rows, parse_checkpoints(summ_checkpoints),
                                             summ_threshold, summ_column);
      std::cout << fedsim::format_summary_text(summary);
      if (!summ_csv.empty()) write_file(summ_csv, fedsim::format_summary_csv(summary));
    } else if (*acct) {
      const fedsim::AccountantState st(q, noise);
      const auto conv = conversion == "classic" ? fedsim::DpConversion::kClassic
                                                : fedsim::DpConversion::kImproved;
      const auto e = fedsim::compose_and_convert(st, rounds * steps_per_round, delta, conv);
      std::printf("epsilon = %.6g\norder   = %g\n", e.epsilon, e.order);
      if (e.grid_extended) {
        std::fprintf(stderr, "warning: optimum at the edge of the order grid; grid extended\n");
      }
    } else if (*pre_list) {
      for (const auto& p : fedsim::presets()) {
        std::printf("%-4s %-22s %-20s %s\n", p.id.c_str(), p.name.c_str(), p.maps_to.c_str(),
                    p.summary.c_str());
      }
    } else if (*pre_show) {
      std::cout << fedsim::preset_settings(show_id, show_paper).to_ini();
    }
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fedsim::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
