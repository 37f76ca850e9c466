// Copyright (c) 2026, The ulab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ulab/checkpoint.hpp"
#include "ulab/corpus.hpp"
#include "ulab/engine.hpp"
#include "ulab/error.hpp"
#include "ulab/eval.hpp"
#include "ulab/io.hpp"
#include "ulab/lab.hpp"
#include "ulab/losses.hpp"
#include "ulab/math.hpp"
#include "ulab/model.hpp"
#include "ulab/report.hpp"
#include "ulab/rng.hpp"
#include "ulab/targets.hpp"
#include "ulab/train.hpp"
