// Copyright (C) 2026 The chanq Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "chanq/error.hpp"
#include "chanq/fixed_point.hpp"

namespace chanq {

/// Row-per-output-channel integer table; row j may be ragged (depthwise rows hold one entry).
using IntMatrix = std::vector<std::vector<int>>;

struct Coordination {
  IntMatrix ker;          // adjusted kernel fl per (j, i)
  IntMatrix comp;         // right shift applied to partial sums of (j, i), >= 0
  std::vector<int> adder; // common partial-sum fl per output channel
  std::vector<int> bias;  // == adder
  std::vector<int> shift; // bias - ofm
};

/// Aligns every partial-sum fl of an output channel to the smallest one by
/// lowering kernel fls. A kernel fl may not drop below `fl_ker_floor`; such a
/// slice keeps the floor and its partial sums are shifted right by
///   s = (floor + fl_ifm) - fl_adder
/// so that fl_ker + fl_ifm - s == fl_bias holds for every (j, i).
///
/// `ifm_index[j][i]` names the input channel of entry (j, i); pass an empty table
/// for dense layers (entry i reads input channel i).
inline Coordination coordinate_layer(std::span<const int> fl_ifm, const IntMatrix& fl_ker_tight,
                                     std::span<const int> fl_ofm, int fl_ker_floor, const IntMatrix& ifm_index = {}) {
  const std::size_t co = fl_ker_tight.size();
  if (fl_ofm.size() != co) throw ContractError("coordinate_layer: ofm fl count does not match kernel rows");
  if (!ifm_index.empty() && ifm_index.size() != co) throw ContractError("coordinate_layer: ifm index rows mismatch");
  Coordination c;
  c.ker.resize(co);
  c.comp.resize(co);
  c.adder.resize(co);
  c.bias.resize(co);
  c.shift.resize(co);
  for (std::size_t j = 0; j < co; ++j) {
    const auto& row = fl_ker_tight[j];
    if (row.empty()) throw ContractError("coordinate_layer: empty kernel row");
    auto input_of = [&](std::size_t i) {
      const std::size_t idx = ifm_index.empty() ? i : static_cast<std::size_t>(ifm_index[j].at(i));
      if (idx >= fl_ifm.size()) throw ContractError("coordinate_layer: input channel out of range");
      return fl_ifm[idx];
    };
    int adder = row[0] + input_of(0);
    for (std::size_t i = 1; i < row.size(); ++i) adder = std::min(adder, row[i] + input_of(i));
    c.adder[j] = adder;
    c.bias[j] = adder;
    c.shift[j] = adder - fl_ofm[j];
    c.ker[j].resize(row.size());
    c.comp[j].assign(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) {
      const int psum = row[i] + input_of(i);
      const int adjusted = row[i] - (psum - adder);
      if (adjusted < fl_ker_floor) {
        c.ker[j][i] = fl_ker_floor;
        c.comp[j][i] = fl_ker_floor + input_of(i) - adder;
      } else {
        c.ker[j][i] = adjusted;
      }
    }
  }
  return c;
}

}  // namespace chanq
