// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "chanq/commands.hpp"
#include "chanq/coordinate.hpp"
#include "chanq/distributions.hpp"
#include "chanq/error.hpp"
#include "chanq/executor.hpp"
#include "chanq/fixed_point.hpp"
#include "chanq/graph.hpp"
#include "chanq/knn.hpp"
#include "chanq/model_io.hpp"
#include "chanq/moments.hpp"
#include "chanq/ops.hpp"
#include "chanq/plan.hpp"
#include "chanq/profiler.hpp"
#include "chanq/qengine.hpp"
#include "chanq/sqnr.hpp"
#include "chanq/synthetic.hpp"
#include "chanq/tensor.hpp"
#include "chanq/transforms.hpp"
