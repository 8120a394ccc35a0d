#pragma once

#include <memory>
#include <vector>

#include "fxrl/data.hpp"
#include "fxrl/env.hpp"

namespace fxrl::testing {

inline std::shared_ptr<const MarketSlice> synthetic_slice(std::size_t bars, std::uint64_t seed,
                                                          SyntheticSpec spec = {}) {
  PreparedData d = prepare_dataset(generate_synthetic(spec, bars, seed), 1.0);
  return std::make_shared<const MarketSlice>(std::move(d.split.train));
}

inline EnvConfig frictionless(EnvConfig cfg = {}) {
  cfg.friction.spread_pips = 0.0;
  cfg.friction.slippage_pips = 0.0;
  cfg.friction.commission_per_lot = 0.0;
  cfg.friction.long_swap_pips_per_day = 0.0;
  cfg.friction.short_swap_pips_per_day = 0.0;
  return cfg;
}

inline Bar bar_at(UtcTime t, double o, double h, double l, double c, double v = 100.0) {
  return Bar{t, o, h, l, c, v};
}

}  // namespace fxrl::testing
