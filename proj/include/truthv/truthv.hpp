// Copyright 2026 The TruthV Authors
// SPDX-License-Identifier: Apache-2.0
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

#include "truthv/analysis.hpp"
#include "truthv/ensemble.hpp"
#include "truthv/error.hpp"
#include "truthv/glu_model.hpp"
#include "truthv/mcq_data.hpp"
#include "truthv/probe_records.hpp"
#include "truthv/selector.hpp"
#include "truthv/synth.hpp"
