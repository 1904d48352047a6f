// Copyright 2026 The tpmhe Authors
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

#include "tpmhe/analysis.hpp"
#include "tpmhe/block_tridiag.hpp"
#include "tpmhe/core.hpp"
#include "tpmhe/estimators.hpp"
#include "tpmhe/experiments.hpp"
#include "tpmhe/io.hpp"
#include "tpmhe/models.hpp"
#include "tpmhe/random.hpp"
#include "tpmhe/simulate.hpp"
#include "tpmhe/solver.hpp"
