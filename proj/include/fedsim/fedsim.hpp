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

#include "fedsim/common/error.hpp"
#include "fedsim/common/parallel.hpp"
#include "fedsim/common/rng.hpp"
#include "fedsim/data/dataset.hpp"
#include "fedsim/data/io.hpp"
#include "fedsim/data/partition.hpp"
#include "fedsim/dp/accountant.hpp"
#include "fedsim/dp/mechanisms.hpp"
#include "fedsim/fed/engine.hpp"
#include "fedsim/harness/chart.hpp"
#include "fedsim/harness/config.hpp"
#include "fedsim/harness/metrics.hpp"
#include "fedsim/harness/presets.hpp"
#include "fedsim/harness/runner.hpp"
#include "fedsim/model/model_spec.hpp"
#include "fedsim/numeric/network.hpp"
#include "fedsim/numeric/param_vector.hpp"
#include "fedsim/numeric/tensor.hpp"
#include "fedsim/version.hpp"
