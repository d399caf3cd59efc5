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

// Built-in experiments E1-E6. Each preset is a list of overrides on the
// schema defaults (3-class 2-d synthetic data, MLP 32, K=3, m=2, B=20, E=1,
// eta=0.02, T=200), plus a second list applied on top for --paper-scale.

#include <string>
#include <utility>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/harness/config.hpp"

namespace fedsim {

using Overrides = std::vector<std::pair<std::string, std::string>>;

struct Preset {
  std::string id;    // "E1"
  std::string name;  // "E1-iid-vs-noniid"
  std::string maps_to;
  std::string summary;
  Overrides desk;
  Overrides paper_scale;
};

inline const std::vector<Preset>& presets() {
  // Paper-scale data: 15000 training examples, so K = 300 leaves 50 each.
  static const Overrides kBigData = {{"data.per_class", "5100"},
                                     {"data.holdout_per_class", "200"},
                                     {"fed.rounds", "1000"},
                                     {"output.checkpoints", "400,600,800,1000"}};
  static const std::vector<Preset> all = [] {
    std::vector<Preset> v;
    v.push_back({"E1", "E1-iid-vs-noniid", "Table I, Fig. 3",
                 "IID vs 1-class vs 2-class label skew, K=3, two clients per round",
                 {{"sweep.param", "fed.partition"}, {"sweep.values", "iid, noniid1, noniid2"}},
                 kBigData});
    v.push_back({"E2", "E2-client-count", "Table II, Fig. 4",
                 "1-class label skew with more clients at C ~ 1/3",
                 {{"fed.partition", "noniid1"},
                  {"sweep.param", "fed.clients+fed.clients_per_round"},
                  {"sweep.values", "3:2, 30:10"},
                  {"sweep.labels", "K=3, K=30"}},
                 {{"sweep.values", "3:2, 30:10, 300:100"}, {"sweep.labels", "K=3, K=30, K=300"}}});
    v.push_back({"E3", "E3-client-fraction", "Fig. 5",
                 "1-class label skew, K=30, client fraction sweep",
                 {{"fed.partition", "noniid1"},
                  {"fed.clients", "30"},
                  {"fed.clients_per_round", "0"},
                  {"experiment.seeds", "1,2,3,4,5"},
                  {"output.threshold", "0.74"},
                  {"sweep.param", "fed.fraction"},
                  {"sweep.values", "0.1, 0.3, 0.7, 1.0"},
                  {"sweep.labels", "C=0.1, C=0.3, C=0.7, C=1.0"}},
                 {{"fed.clients", "300"},
                  {"sweep.values", "0.1, 0.2, 0.3, 0.7, 1.0"},
                  {"sweep.labels", "C=0.1, C=0.2, C=0.3, C=0.7, C=1.0"}}});
    v.push_back({"E4", "E4-refined-noniid", "Fig. 6, Table III",
                 "baseline vs more clients vs more clients + C=0.7 with B in {1, 20, 100}",
                 {{"fed.partition", "noniid1"},
                  {"sweep.param",
                   "fed.clients+fed.clients_per_round+fed.fraction+fed.batch_size"},
                  {"sweep.values", "3:2:0.33:20, 30:0:0.33:20, 30:0:0.7:1, 30:0:0.7:20, 30:0:0.7:100"},
                  {"sweep.labels", "baseline, K=30, K=30 C=0.7 B=1, K=30 C=0.7 B=20, "
                                   "K=30 C=0.7 B=100"}},
                 {{"sweep.values",
                   "3:2:0.33:20, 300:0:0.33:20, 300:0:0.7:1, 300:0:0.7:20, 300:0:0.7:100"},
                  {"sweep.labels", "baseline, K=300, K=300 C=0.7 B=1, K=300 C=0.7 B=20, "
                                   "K=300 C=0.7 B=100"}}});
    v.push_back({"E5", "E5-noise", "Fig. 7",
                 "client-level DP on IID data, K=3, noise multiplier sweep",
                 {{"privacy.enabled", "true"},
                  {"sweep.param", "privacy.noise"},
                  {"sweep.values", "0, 0.5, 1.0, 2.0"},
                  {"sweep.labels", "z=0, z=0.5, z=1.0, z=2.0"}},
                 {}});
    v.push_back({"E6", "E6-robustness", "Table IV, Fig. 8",
                 "client-level DP at q = 1/3: scale K and z together",
                 {{"privacy.enabled", "true"},
                  {"fed.fraction", "1/3"},
                  {"fed.clients_per_round", "0"},
                  {"sweep.param", "fed.clients+privacy.noise"},
                  {"sweep.values", "3:0.1, 9:0.3, 30:0.7, 60:1.3, 90:1.9, 99:2.1"},
                  {"sweep.labels", "K=3 z=0.1, K=9 z=0.3, K=30 z=0.7, K=60 z=1.3, K=90 z=1.9, "
                                   "K=99 z=2.1"}},
                 {{"sweep.values", "3:0.1, 30:0.3, 90:0.7, 180:1.3, 270:1.9, 300:2.1"},
                  {"sweep.labels", "K=3 z=0.1, K=30 z=0.3, K=90 z=0.7, K=180 z=1.3, "
                                   "K=270 z=1.9, K=300 z=2.1"}}});
    for (auto& p : v) {
      if (p.id != "E1") {
        Overrides merged = kBigData;
        merged.insert(merged.end(), p.paper_scale.begin(), p.paper_scale.end());
        p.paper_scale = std::move(merged);
      }
    }
    return v;
  }();
  return all;
}

// Accepts "E1", "e1" or the full name.
inline const Preset* find_preset(const std::string& key) {
  for (const auto& p : presets()) {
    if (key == p.id || key == p.name) return &p;
    if (key.size() == 2 && (key[0] == 'e' || key[0] == 'E') && key[1] == p.id[1]) return &p;
  }
  return nullptr;
}

inline Settings preset_settings(const Preset& p, bool paper_scale = false) {
  Settings s;
  s.set("experiment.name", p.name);
  s.set("experiment.description", p.summary);
  s.set("experiment.maps_to", p.maps_to);
  for (const auto& [k, v] : p.desk) s.set(k, v);
  if (paper_scale) {
    for (const auto& [k, v] : p.paper_scale) s.set(k, v);
  }
  return s;
}

inline Settings preset_settings(const std::string& key, bool paper_scale = false) {
  const Preset* p = find_preset(key);
  if (!p) throw ConfigError("unknown preset '" + key + "'");
  return preset_settings(*p, paper_scale);
}

}  // namespace fedsim
