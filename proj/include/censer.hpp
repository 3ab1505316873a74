// Copyright 2026 The censer-lab Authors
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

#include "censer/types.hpp"
#include "censer/rng.hpp"
#include "censer/io.hpp"
#include "censer/parallel.hpp"
#include "censer/ctc.hpp"
#include "censer/scoring.hpp"
#include "censer/model.hpp"
#include "censer/checkpoint.hpp"
#include "censer/augment.hpp"
#include "censer/corpus.hpp"
#include "censer/curriculum.hpp"
#include "censer/trainer.hpp"
#include "censer/config.hpp"
#include "censer/experiment.hpp"
#include "censer/cli.hpp"
