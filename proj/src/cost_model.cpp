// SPDX-License-Identifier: Apache-2.0
#include "asd/cost_model.hpp"

#include <cmath>
#include <sstream>

#include "asd/errors.hpp"

namespace asd::cost {

std::optional<double> latency_ms(const CostConfig& cfg) {
  if (cfg.kind == FusionKind::bi_gru) return std::nullopt;
  int fusion_future = 0;
  if (cfg.kind == FusionKind::transformer) {
    if (!cfg.fusion_ctx.future) return std::nullopt;
    fusion_future = *cfg.fusion_ctx.future;
  }
  const double frame_ms = 1000.0 / cfg.fps;
  return (cfg.encoder_future + fusion_future) * frame_ms;
}

std::optional<std::uint64_t> memory_bytes(const CostConfig& cfg) {
  switch (cfg.kind) {
    case FusionKind::bi_gru:
      return std::nullopt;
    case FusionKind::uni_gru:
      return cfg.bytes_per_frame;
    case FusionKind::transformer:
      if (!cfg.fusion_ctx.past) return std::nullopt;
      return static_cast<std::uint64_t>(*cfg.fusion_ctx.past) *
             cfg.bytes_per_frame;
  }
  return std::nullopt;
}

std::vector<GridRow> sweep_grid(int past_lo, int past_hi, int future_lo,
                                int future_hi, const CostConfig& cfg) {
  if (past_hi < past_lo || future_hi < future_lo) {
    throw DataError("sweep_grid: empty range");
  }
  std::vector<GridRow> rows;
  rows.reserve(static_cast<std::size_t>(past_hi - past_lo + 1) *
               (future_hi - future_lo + 1));
  for (int p = past_lo; p <= past_hi; ++p) {
    for (int f = future_lo; f <= future_hi; ++f) {
      CostConfig cell = cfg;
      cell.fusion_ctx = ContextConfig::bounded(p, f);
      const auto lat = latency_ms(cell);
      const auto mem = memory_bytes(cell);
      GridRow row;
      row.past = p;
      row.future = f;
      row.latency_ms = static_cast<std::int64_t>(std::llround(*lat));
      row.memory_bytes = *mem;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string grid_csv(const std::vector<GridRow>& rows) {
  std::ostringstream os;
  os << "past,future,latency_ms,memory_bytes\n";
  for (const GridRow& r : rows) {
    os << r.past << "," << r.future << "," << r.latency_ms << ","
       << r.memory_bytes << "\n";
  }
  return os.str();
}

std::string format_latency(const std::optional<double>& v) {
  if (!v) return "inf";
  std::ostringstream os;
  if (*v == std::floor(*v)) {
    os << static_cast<std::int64_t>(*v);
  } else {
    os << *v;
  }
  return os.str();
}

std::string format_memory(const std::optional<std::uint64_t>& v) {
  if (!v) return "inf";
  return std::to_string(*v);
}

}  // namespace asd::cost
