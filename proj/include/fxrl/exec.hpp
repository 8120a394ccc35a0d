#pragma once

#include <vector>

#include "fxrl/actions.hpp"
#include "fxrl/time.hpp"

namespace fxrl {

inline constexpr double kUnitsPerLot = 100000.0;

enum class Direction : int { short_side = -1, flat = 0, long_side = 1 };

inline double sign_of(Direction d) { return static_cast<double>(static_cast<int>(d)); }

struct Position {
  Direction direction = Direction::flat;
  // Size in base-lot units; `lots` is always units * base_lot.
  int units = 0;
  double lots = 0.0;
  double avg_entry_price = 0.0;
  int pyramid_depth = 0;
  int martingale_depth = 0;

  bool is_flat() const { return direction == Direction::flat; }
  bool operator==(const Position&) const = default;
};

struct PortfolioState {
  double cash = 0.0;
  double equity = 0.0;
  double realized_pnl = 0.0;  // cumulative
  double unrealized_pnl = 0.0;
  double used_margin = 0.0;
  double free_margin = 0.0;
  double margin_utilization = 0.0;
  Position position;
  double peak_equity = 0.0;
  double current_drawdown = 0.0;
  bool liquidated = false;
  // Price of the last mark (close_t); legality checks estimate margin with it.
  double mark_price = 0.0;

  bool operator==(const PortfolioState&) const = default;
};

PortfolioState initial_portfolio(double initial_capital, double mark_price);

struct FrictionConfig {
  double spread_pips = 1.0;
  double slippage_pips = 0.5;
  double commission_per_lot = 3.5;  // charged on entry legs; one round trip
  double pip_size = 0.0001;
  double long_swap_pips_per_day = -0.5;
  double short_swap_pips_per_day = -0.3;
  int rollover_hour_utc = 22;
};

struct RiskConfig {
  double max_leverage = 30.0;
  double maintenance_margin_ratio = 0.5;
  double liquidation_equity_fraction = 0.25;
  int depth_cap = 3;
  double base_lot = 0.1;
  double reduce_fraction = 0.5;
  bool allow_pyramid = true;
  bool allow_martingale = true;

  // Largest attainable position: base + every pyramid add + every martingale add.
  double max_lots() const;
};

void validate(const FrictionConfig& f);
void validate(const RiskConfig& r);

double margin_required(double lots, double price, const RiskConfig& r);
// Martingale add size (units) at the current depth: doubling per level.
int martingale_units(int current_depth);

enum class Side { buy, sell };

double quote_and_fill(Side side, double open_next, const FrictionConfig& f);

struct CostTrace {
  double spread_cost = 0.0;
  double slippage_cost = 0.0;
  double commission = 0.0;
  double rollover = 0.0;  // signed cash effect

  bool operator==(const CostTrace&) const = default;
};

enum class LegKind { open, add, reduce, close, liquidation };

struct Fill {
  LegKind kind = LegKind::open;
  Side side = Side::buy;
  double lots = 0.0;
  double price = 0.0;
  double realized = 0.0;  // price PnL booked by this leg (closing legs)
  double commission = 0.0;
};

// The three prices a step may consult plus the settlement timestamp.
struct BarTransition {
  double close_t = 0.0;
  double open_next = 0.0;
  double close_next = 0.0;
  UtcTime timestamp_next;
};

struct StepOutcome {
  PortfolioState next_state;
  Action executed_action = Action::hold;
  bool violation = false;
  bool liquidation_event = false;
  CostTrace cost_trace;
  double realized_delta = 0.0;
  double unrealized_delta = 0.0;
  double traded_lots = 0.0;
  std::vector<Fill> fills;
};

// Full step: legality coercion, feasibility, fills at open_next, commission,
// rollover, mark at close_next, liquidation. `mask` is the extended-action
// mask computed from `state` before dispatch.
StepOutcome execute(const PortfolioState& state, Action action, const BarTransition& bars,
                    const FrictionConfig& f, const RiskConfig& r, const LegalMask& mask,
                    double initial_capital);

// Financing on the position held through `timestamp` (the settled bar).
PortfolioState apply_rollover(const PortfolioState& state, UtcTime timestamp,
                              const FrictionConfig& f, double* rollover_cash = nullptr);

double rollover_amount(const Position& pos, UtcTime timestamp, const FrictionConfig& f);

PortfolioState mark_to_market(const PortfolioState& state, double close_next,
                              double max_leverage);

bool check_liquidation(const PortfolioState& state, const RiskConfig& r, double initial_capital);

}  // namespace fxrl
