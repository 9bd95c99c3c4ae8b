// Copyright 2026 The AGCN Authors.
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

#include "agcn/analysis.hpp"
#include "agcn/clustering.hpp"
#include "agcn/common.hpp"
#include "agcn/datagen.hpp"
#include "agcn/graph.hpp"
#include "agcn/io.hpp"
#include "agcn/model.hpp"
#include "agcn/training.hpp"
