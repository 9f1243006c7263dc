// Copyright 2026 The coldpipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "coldpipe/chain.hpp"
#include "coldpipe/cluster.hpp"
#include "coldpipe/common.hpp"
#include "coldpipe/config.hpp"
#include "coldpipe/lora.hpp"
#include "coldpipe/metrics.hpp"
#include "coldpipe/model.hpp"
#include "coldpipe/plan.hpp"
#include "coldpipe/recovery.hpp"
#include "coldpipe/report.hpp"
#include "coldpipe/request.hpp"
#include "coldpipe/scenario.hpp"
#include "coldpipe/simulator.hpp"
#include "coldpipe/switcher.hpp"
#include "coldpipe/trace.hpp"
#include "coldpipe/workload.hpp"
