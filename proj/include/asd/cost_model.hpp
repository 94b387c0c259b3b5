// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "asd/fusion.hpp"

namespace asd::cost {

enum class FusionKind { transformer, uni_gru, bi_gru };

struct CostConfig {
  double fps = 25.0;
  std::uint64_t bytes_per_frame = 524288;  // 512 KB stored per retained frame
  int encoder_future = 0;
  ContextConfig fusion_ctx = ContextConfig::bounded(32, 8);
  FusionKind kind = FusionKind::transformer;
};

// Emission wait: (encoder_future + fusion_future) frame periods. nullopt =
// unbounded (bi-GRU or an unbounded future mask).
std::optional<double> latency_ms(const CostConfig& cfg);

// Retained history: fusion_past frames for the transformer, one frame for the
// uni-GRU. nullopt = unbounded (bi-GRU or unbounded past). Future frames are
// not counted; only history kept across steps is.
std::optional<std::uint64_t> memory_bytes(const CostConfig& cfg);

struct GridRow {
  int past = 0;
  int future = 0;
  std::int64_t latency_ms = 0;
  std::uint64_t memory_bytes = 0;
};

// Cartesian product over inclusive past/future ranges.
std::vector<GridRow> sweep_grid(int past_lo, int past_hi, int future_lo,
                                int future_hi, const CostConfig& cfg);

std::string grid_csv(const std::vector<GridRow>& rows);  // with header

std::string format_latency(const std::optional<double>& v);
std::string format_memory(const std::optional<std::uint64_t>& v);

}  // namespace asd::cost
