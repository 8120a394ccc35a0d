#include "fxrl/exec.hpp"

#include <algorithm>
#include <cmath>

#include "fxrl/error.hpp"

namespace fxrl {

namespace {

void refresh_margin_stats(PortfolioState& s, double max_leverage) {
  const Position& p = s.position;
  s.used_margin = p.is_flat() ? 0.0 : p.lots * kUnitsPerLot * p.avg_entry_price / max_leverage;
  s.free_margin = s.equity - s.used_margin;
  if (s.used_margin <= 0.0) {
    s.margin_utilization = 0.0;
  } else if (s.equity <= 0.0) {
    s.margin_utilization = 1.0;
  } else {
    s.margin_utilization = std::min(1.0, s.used_margin / s.equity);
  }
}

void refresh_drawdown(PortfolioState& s) {
  s.peak_equity = std::max(s.peak_equity, s.equity);
  s.current_drawdown =
      s.peak_equity > 0.0 ? std::max(0.0, (s.peak_equity - s.equity) / s.peak_equity) : 0.0;
}

Side entry_side(Direction d) { return d == Direction::long_side ? Side::buy : Side::sell; }
Side exit_side(Direction d) { return d == Direction::long_side ? Side::sell : Side::buy; }

// Applies trade legs to the position/cash and records fills and costs.
class Ledger {
 public:
  Ledger(PortfolioState& s, StepOutcome& out, const FrictionConfig& f, const RiskConfig& r)
      : s_(s), out_(out), f_(f), r_(r) {}

  void add(Direction dir, int units, double price, LegKind kind) {
    Position& p = s_.position;
    const double lots = units * r_.base_lot;
    const int new_units = p.units + units;
    const double new_lots = new_units * r_.base_lot;
    p.avg_entry_price = p.is_flat() ? price : (p.avg_entry_price * p.lots + price * lots) / new_lots;
    p.direction = dir;
    p.units = new_units;
    p.lots = new_lots;
    const double commission = f_.commission_per_lot * lots;
    s_.cash -= commission;
    record(kind, entry_side(dir), lots, price, 0.0, commission, true);
  }

  void remove(int units, double price, LegKind kind, bool with_friction, bool charge_commission) {
    Position& p = s_.position;
    const Direction dir = p.direction;
    const double lots = units * r_.base_lot;
    const double pnl = sign_of(dir) * (price - p.avg_entry_price) * lots * kUnitsPerLot;
    s_.cash += pnl;
    s_.realized_pnl += pnl;
    out_.realized_delta += pnl;
    const double commission = charge_commission ? f_.commission_per_lot * lots : 0.0;
    s_.cash -= commission;
    p.units -= units;
    if (p.units == 0) {
      p = Position{};
    } else {
      p.lots = p.units * r_.base_lot;
    }
    record(kind, exit_side(dir), lots, price, pnl, commission, with_friction);
  }

 private:
  void record(LegKind kind, Side side, double lots, double price, double realized,
              double commission, bool with_friction) {
    out_.fills.push_back(Fill{kind, side, lots, price, realized, commission});
    out_.traded_lots += lots;
    out_.cost_trace.commission += commission;
    if (with_friction) {
      out_.cost_trace.spread_cost += lots * kUnitsPerLot * 0.5 * f_.spread_pips * f_.pip_size;
      out_.cost_trace.slippage_cost += lots * kUnitsPerLot * f_.slippage_pips * f_.pip_size;
    }
  }

  PortfolioState& s_;
  StepOutcome& out_;
  const FrictionConfig& f_;
  const RiskConfig& r_;
};

}  // namespace

double RiskConfig::max_lots() const {
  return base_lot * (1 + depth_cap + ((1 << depth_cap) - 1));
}

void validate(const FrictionConfig& f) {
  if (f.spread_pips < 0 || f.slippage_pips < 0 || f.commission_per_lot < 0 || !(f.pip_size > 0)) {
    throw ConfigError("friction costs must be >= 0 and pip_size > 0");
  }
  if (f.rollover_hour_utc < 0 || f.rollover_hour_utc > 23) {
    throw ConfigError("rollover_hour_utc must lie in [0, 23]");
  }
}

void validate(const RiskConfig& r) {
  auto in_unit = [](double x) { return x > 0.0 && x <= 1.0; };
  if (!(r.max_leverage > 0.0)) throw ConfigError("max_leverage must be > 0");
  if (!in_unit(r.maintenance_margin_ratio) || !in_unit(r.liquidation_equity_fraction) ||
      !in_unit(r.reduce_fraction)) {
    throw ConfigError("risk fractions must lie in (0, 1]");
  }
  if (r.depth_cap < 0 || r.depth_cap > 16) throw ConfigError("depth_cap must lie in [0, 16]");
  if (!(r.base_lot > 0.0)) throw ConfigError("base_lot must be > 0");
}

PortfolioState initial_portfolio(double initial_capital, double mark_price) {
  PortfolioState s;
  s.cash = initial_capital;
  s.equity = initial_capital;
  s.free_margin = initial_capital;
  s.peak_equity = initial_capital;
  s.mark_price = mark_price;
  return s;
}

double margin_required(double lots, double price, const RiskConfig& r) {
  return lots * kUnitsPerLot * price / r.max_leverage;
}

int martingale_units(int current_depth) { return 1 << current_depth; }

double quote_and_fill(Side side, double open_next, const FrictionConfig& f) {
  const double adj = (0.5 * f.spread_pips + f.slippage_pips) * f.pip_size;
  return side == Side::buy ? open_next + adj : open_next - adj;
}

double rollover_amount(const Position& pos, UtcTime timestamp, const FrictionConfig& f) {
  if (pos.is_flat() || hour_of(timestamp) != f.rollover_hour_utc) return 0.0;
  const double pips =
      pos.direction == Direction::long_side ? f.long_swap_pips_per_day : f.short_swap_pips_per_day;
  const double days = weekday_of(timestamp) == Weekday::wednesday ? 3.0 : 1.0;
  return pips * f.pip_size * pos.lots * kUnitsPerLot * days;
}

PortfolioState apply_rollover(const PortfolioState& state, UtcTime timestamp,
                              const FrictionConfig& f, double* rollover_cash) {
  PortfolioState s = state;
  const double amount = rollover_amount(s.position, timestamp, f);
  s.cash += amount;
  if (rollover_cash) *rollover_cash = amount;
  return s;
}

PortfolioState mark_to_market(const PortfolioState& state, double close_next,
                              double max_leverage) {
  PortfolioState s = state;
  const Position& p = s.position;
  s.unrealized_pnl =
      p.is_flat() ? 0.0 : sign_of(p.direction) * (close_next - p.avg_entry_price) * p.lots * kUnitsPerLot;
  s.equity = s.cash + s.unrealized_pnl;
  s.mark_price = close_next;
  refresh_margin_stats(s, max_leverage);
  refresh_drawdown(s);
  return s;
}

bool check_liquidation(const PortfolioState& s, const RiskConfig& r, double initial_capital) {
  return s.equity < r.liquidation_equity_fraction * initial_capital ||
         s.equity < r.maintenance_margin_ratio * s.used_margin;
}

StepOutcome execute(const PortfolioState& state, Action action, const BarTransition& bars,
                    const FrictionConfig& f, const RiskConfig& r, const LegalMask& mask,
                    double initial_capital) {
  if (!std::isfinite(bars.close_t) || !std::isfinite(bars.open_next) ||
      !std::isfinite(bars.close_next) || bars.open_next <= 0.0 || bars.close_next <= 0.0) {
    throw DataError("non-finite or non-positive bar price at " +
                    format_iso8601(bars.timestamp_next));
  }
  if (mask.size() != kExtendedActionCount) {
    throw ContractError("execute needs an extended-action mask");
  }
  StepOutcome out;
  PortfolioState s = state;
  const Position& pos = s.position;

  Action exec = action;
  const auto idx = static_cast<std::size_t>(action);
  if (idx >= kExtendedActionCount || !mask[idx]) {
    exec = Action::hold;
    out.violation = true;
  }

  // Pre-trade feasibility at the actual fill price.
  const double buy_fill = quote_and_fill(Side::buy, bars.open_next, f);
  const double sell_fill = quote_and_fill(Side::sell, bars.open_next, f);
  auto fill_for = [&](Side side) { return side == Side::buy ? buy_fill : sell_fill; };
  auto feasible_add = [&](Direction dir, int units) {
    return margin_required(units * r.base_lot, fill_for(entry_side(dir)), r) <= s.free_margin;
  };
  switch (exec) {
    case Action::open_long:
      if (!feasible_add(Direction::long_side, 1)) exec = Action::hold;
      break;
    case Action::open_short:
      if (!feasible_add(Direction::short_side, 1)) exec = Action::hold;
      break;
    case Action::pyramid_long:
    case Action::pyramid_short:
      if (!feasible_add(pos.direction, 1)) exec = Action::hold;
      break;
    case Action::martingale_long:
    case Action::martingale_short:
      if (!feasible_add(pos.direction, martingale_units(pos.martingale_depth))) {
        exec = Action::hold;
      }
      break;
    case Action::reverse: {
      const Direction opposite =
          pos.direction == Direction::long_side ? Direction::short_side : Direction::long_side;
      const double close_px = fill_for(exit_side(pos.direction));
      const double cash_after =
          s.cash + sign_of(pos.direction) * (close_px - pos.avg_entry_price) * pos.lots * kUnitsPerLot;
      if (margin_required(r.base_lot, fill_for(entry_side(opposite)), r) > cash_after) {
        exec = Action::hold;
      }
      break;
    }
    default:
      break;
  }
  if (exec == Action::hold && action != Action::hold) out.violation = true;
  out.executed_action = exec;

  Ledger ledger(s, out, f, r);
  switch (exec) {
    case Action::hold:
      break;
    case Action::open_long:
      ledger.add(Direction::long_side, 1, buy_fill, LegKind::open);
      break;
    case Action::open_short:
      ledger.add(Direction::short_side, 1, sell_fill, LegKind::open);
      break;
    case Action::pyramid_long:
    case Action::pyramid_short: {
      const Direction dir = s.position.direction;
      ledger.add(dir, 1, fill_for(entry_side(dir)), LegKind::add);
      s.position.pyramid_depth += 1;
      break;
    }
    case Action::martingale_long:
    case Action::martingale_short: {
      const Direction dir = s.position.direction;
      ledger.add(dir, martingale_units(s.position.martingale_depth), fill_for(entry_side(dir)),
                 LegKind::add);
      s.position.martingale_depth += 1;
      break;
    }
    case Action::reduce: {
      const int units = s.position.units;
      const int cut = static_cast<int>(std::floor(units * r.reduce_fraction));
      const double px = fill_for(exit_side(s.position.direction));
      if (cut < 1 || cut >= units) {
        ledger.remove(units, px, LegKind::close, true, false);
      } else {
        ledger.remove(cut, px, LegKind::reduce, true, false);
      }
      break;
    }
    case Action::close:
      ledger.remove(s.position.units, fill_for(exit_side(s.position.direction)), LegKind::close,
                    true, false);
      break;
    case Action::reverse: {
      const Direction opposite = s.position.direction == Direction::long_side
                                     ? Direction::short_side
                                     : Direction::long_side;
      ledger.remove(s.position.units, fill_for(exit_side(s.position.direction)), LegKind::close,
                    true, false);
      ledger.add(opposite, 1, fill_for(entry_side(opposite)), LegKind::open);
      break;
    }
  }

  double rollover = 0.0;
  s = apply_rollover(s, bars.timestamp_next, f, &rollover);
  out.cost_trace.rollover = rollover;

  s = mark_to_market(s, bars.close_next, r.max_leverage);

  if (!s.liquidated && check_liquidation(s, r, initial_capital)) {
    if (!s.position.is_flat()) {
      Ledger liq(s, out, f, r);
      liq.remove(s.position.units, bars.close_next, LegKind::liquidation, false, true);
    }
    s.liquidated = true;
    s = mark_to_market(s, bars.close_next, r.max_leverage);
    out.liquidation_event = true;
  }

  out.unrealized_delta = s.unrealized_pnl - state.unrealized_pnl;
  out.next_state = s;
  return out;
}

}  // namespace fxrl
