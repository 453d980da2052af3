// Copyright 2026 The are-bci Authors
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

#include "are/adversarial.hpp"
#include "are/alignment.hpp"
#include "are/autodiff.hpp"
#include "are/data.hpp"
#include "are/errors.hpp"
#include "are/eval.hpp"
#include "are/federated.hpp"
#include "are/linalg.hpp"
#include "are/model.hpp"
#include "are/privacy.hpp"
#include "are/rng.hpp"
#include "are/signal.hpp"
#include "are/tensor.hpp"
#include "are/training.hpp"
