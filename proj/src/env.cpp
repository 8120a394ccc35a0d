#include "fxrl/env.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "fxrl/error.hpp"

namespace fxrl {

namespace {

std::atomic<std::size_t> g_instances{0};

LegalMask extended_mask(const PortfolioState& s, const RiskConfig& r) {
  LegalMask m(kExtendedActionCount);
  m.set(static_cast<std::size_t>(Action::hold), true);
  if (s.liquidated) return m;
  const Position& p = s.position;
  const double price = s.mark_price;
  auto can_afford = [&](double lots) { return margin_required(lots, price, r) <= s.free_margin; };
  auto set = [&](Action a, bool v) { m.set(static_cast<std::size_t>(a), v); };

  if (p.is_flat()) {
    const bool ok = can_afford(r.base_lot);
    set(Action::open_long, ok);
    set(Action::open_short, ok);
    return m;
  }
  const bool is_long = p.direction == Direction::long_side;
  const bool pyramid_ok =
      r.allow_pyramid && p.pyramid_depth < r.depth_cap && can_afford(r.base_lot);
  const bool martingale_ok = r.allow_martingale && p.martingale_depth < r.depth_cap &&
                             s.unrealized_pnl < 0.0 &&
                             can_afford(martingale_units(p.martingale_depth) * r.base_lot);
  set(is_long ? Action::pyramid_long : Action::pyramid_short, pyramid_ok);
  set(is_long ? Action::martingale_long : Action::martingale_short, martingale_ok);
  set(Action::reduce, true);
  set(Action::close, true);
  // After the close leg the whole equity is free.
  set(Action::reverse, margin_required(r.base_lot, price, r) <= s.equity);
  return m;
}

}  // namespace

void validate(const EnvConfig& cfg) {
  if (cfg.window < 1) throw ConfigError("environment.window must be >= 1");
  if (!(cfg.initial_capital > 0.0)) throw ConfigError("initial_capital must be > 0");
  if (!(cfg.reward.clip_min <= cfg.reward.clip_max)) throw ConfigError("clip_min > clip_max");
  validate(cfg.friction);
  validate(cfg.risk);
}

LegalMask compute_legal_mask(const PortfolioState& state, const RiskConfig& r, ActionMode mode) {
  LegalMask ext = extended_mask(state, r);
  if (mode == ActionMode::extended) return ext;
  LegalMask m(kSimplifiedActionCount);
  m.set(0, true);
  for (TargetAction a : {TargetAction::target_long, TargetAction::target_short}) {
    const Action mapped = adapt_simplified(a, state);
    m.set(static_cast<std::size_t>(a), ext[static_cast<std::size_t>(mapped)]);
  }
  return m;
}

Action adapt_simplified(TargetAction a, const PortfolioState& state) {
  const Direction d = state.position.direction;
  switch (a) {
    case TargetAction::hold:
      return Action::hold;
    case TargetAction::target_long:
      if (d == Direction::flat) return Action::open_long;
      return d == Direction::short_side ? Action::reverse : Action::hold;
    case TargetAction::target_short:
      if (d == Direction::flat) return Action::open_short;
      return d == Direction::long_side ? Action::reverse : Action::hold;
  }
  return Action::hold;
}

std::vector<double> portfolio_vector(const PortfolioState& s, const EnvConfig& cfg) {
  const double c0 = cfg.initial_capital;
  const double cap = cfg.risk.depth_cap > 0 ? cfg.risk.depth_cap : 1.0;
  const double max_lots = cfg.risk.max_lots();
  return {
      s.cash / c0,
      s.equity / c0,
      s.unrealized_pnl / c0,
      s.realized_pnl / c0,
      s.margin_utilization,
      sign_of(s.position.direction),
      max_lots > 0.0 ? s.position.lots / max_lots : 0.0,
      s.position.pyramid_depth / cap,
      s.position.martingale_depth / cap,
      s.current_drawdown,
  };
}

Observation build_observation(std::span<const FeatureRow> rows, const PortfolioState& state,
                              const LegalMask& mask, const EnvConfig& cfg) {
  if (rows.size() != cfg.window) {
    throw ContractError("build_observation needs exactly " + std::to_string(cfg.window) +
                        " feature rows, got " + std::to_string(rows.size()));
  }
  if (mask.size() != action_count(cfg.action_mode)) {
    throw ContractError("mask width does not match the action mode");
  }
  const std::size_t d_feat = rows.front().values.size();
  Observation obs;
  obs.market.reserve(cfg.window * d_feat);
  for (const FeatureRow& r : rows) {
    if (r.values.size() != d_feat) throw ContractError("ragged feature rows");
    obs.market.insert(obs.market.end(), r.values.begin(), r.values.end());
  }
  obs.portfolio = portfolio_vector(state, cfg);
  obs.mask = mask;
  obs.flat.reserve(flat_dimension(cfg.window, d_feat, mask.size()));
  obs.flat = obs.market;
  obs.flat.insert(obs.flat.end(), obs.portfolio.begin(), obs.portfolio.end());
  for (std::size_t i = 0; i < mask.size(); ++i) obs.flat.push_back(mask[i] ? 1.0 : 0.0);
  if (obs.flat.size() != flat_dimension(cfg.window, d_feat, mask.size())) {
    throw ContractError("flat observation length violates the dimensioning rule");
  }
  return obs;
}

Environment::Environment(EnvConfig cfg, std::shared_ptr<const MarketSlice> data)
    : cfg_(std::move(cfg)), data_(std::move(data)) {
  validate(cfg_);
  if (!data_) throw ContractError("environment needs a market slice");
  if (data_->bars.size() != data_->features.size()) {
    throw ContractError("market slice bars and feature rows are not aligned");
  }
  if (data_->size() < cfg_.window + 2) {
    throw DataError("market slice has " + std::to_string(data_->size()) +
                    " bars; need at least window + 2 = " + std::to_string(cfg_.window + 2));
  }
  d_feat_ = data_->features.front().values.size();
  // Build one observation up front so a dimension mismatch fails here.
  const LegalMask m = compute_legal_mask(initial_portfolio(cfg_.initial_capital, 1.0), cfg_.risk,
                                         cfg_.action_mode);
  const auto probe = build_observation(
      std::span<const FeatureRow>(data_->features.data(), cfg_.window),
      initial_portfolio(cfg_.initial_capital, 1.0), m, cfg_);
  if (probe.flat.size() != flat_dim()) throw ContractError("flat dimension mismatch");
  ++g_instances;
}

std::size_t Environment::instances_created() { return g_instances.load(); }

std::size_t Environment::episode_length() const {
  const std::size_t full = data_->size() - cfg_.window;
  return cfg_.max_episode_steps == 0 ? full : std::min(full, cfg_.max_episode_steps);
}

std::span<const Bar> Environment::history() const {
  return std::span<const Bar>(data_->bars.data(), cursor_ + 1);
}

Observation Environment::observe() const {
  std::size_t end = cursor_;
  if (cfg_.fault == CausalityFault::peek_future_features && end + 1 < data_->size()) ++end;
  const std::size_t begin = end + 1 - cfg_.window;
  return build_observation(
      std::span<const FeatureRow>(data_->features.data() + begin, cfg_.window), state_, mask_,
      cfg_);
}

Observation Environment::reset(std::uint64_t seed) {
  seed_ = seed;
  cursor_ = cfg_.window - 1;
  steps_ = 0;
  state_ = initial_portfolio(cfg_.initial_capital, data_->bars[cursor_].close);
  mask_ = compute_legal_mask(state_, cfg_.risk, cfg_.action_mode);
  equity_returns_.clear();
  trade_flags_.clear();
  trade_count_window_ = 0;
  normalizer_.reset();
  started_ = true;
  done_ = false;
  return observe();
}

Observation Environment::reset(std::uint64_t seed, std::shared_ptr<const MarketSlice> data) {
  Environment fresh(cfg_, std::move(data));
  *this = std::move(fresh);
  return reset(seed);
}

StepResult Environment::step(int action) {
  if (!started_) throw ContractError("step() before reset()");
  if (done_) throw ContractError("step() after episode end; call reset()");
  const std::size_t n_a = n_actions();
  if (action < 0 || static_cast<std::size_t>(action) >= n_a) {
    throw ContractError("action id " + std::to_string(action) + " outside [0, " +
                        std::to_string(n_a) + ")");
  }
  const std::size_t t = cursor_;
  const PortfolioState prev = state_;
  const LegalMask mode_mask = mask_;
  const LegalMask ext_mask = cfg_.action_mode == ActionMode::extended
                                 ? mode_mask
                                 : compute_legal_mask(prev, cfg_.risk, ActionMode::extended);

  bool coerced = false;
  Action ext_action = Action::hold;
  if (!mode_mask[static_cast<std::size_t>(action)]) {
    coerced = true;
  } else if (cfg_.action_mode == ActionMode::extended) {
    ext_action = static_cast<Action>(action);
  } else {
    ext_action = adapt_simplified(static_cast<TargetAction>(action), prev);
  }

  const Bar& now = data_->bars[t];
  const Bar& next = data_->bars[t + 1];
  BarTransition bt{now.close, next.open, next.close, next.timestamp};
  if (cfg_.fault == CausalityFault::fill_at_close) bt.open_next = next.close;
  if (cfg_.fault == CausalityFault::mark_at_future_close && t + 2 < data_->size()) {
    bt.close_next = data_->bars[t + 2].close;
  }

  StepOutcome out = execute(prev, ext_action, bt, cfg_.friction, cfg_.risk, ext_mask,
                            cfg_.initial_capital);
  if (coerced) out.violation = true;

  // Rolling windows the reward reads.
  const double eq_ret = prev.equity != 0.0 ? (out.next_state.equity - prev.equity) / prev.equity : 0.0;
  equity_returns_.push_back(eq_ret);
  while (equity_returns_.size() > static_cast<std::size_t>(cfg_.reward.params.volatility_window)) {
    equity_returns_.pop_front();
  }
  const int traded = out.traded_lots > 0.0 ? 1 : 0;
  trade_flags_.push_back(traded);
  trade_count_window_ += traded;
  while (trade_flags_.size() > static_cast<std::size_t>(cfg_.reward.params.overtrading_window)) {
    trade_count_window_ -= trade_flags_.front();
    trade_flags_.pop_front();
  }

  TransitionTrace tr;
  tr.prev_portfolio = prev;
  tr.next_portfolio = out.next_state;
  tr.executed_action = out.executed_action;
  tr.proposed_action = action;
  tr.cost_trace = out.cost_trace;
  tr.violation = out.violation;
  tr.liquidation_event = out.liquidation_event;
  tr.recent_trade_count = trade_count_window_;
  tr.equity_return_history.assign(equity_returns_.begin(), equity_returns_.end());
  tr.depth_cap = cfg_.risk.depth_cap;

  const ComponentValues comps = compute_components(tr, cfg_.reward);
  RewardResult rr = aggregate(comps, cfg_.reward);
  double reward = rr.reward;
  if (cfg_.reward.normalization == NormalizationMode::running) {
    reward = normalizer_.normalize(rr.trace.raw_sum, cfg_.reward.clip_min, cfg_.reward.clip_max);
  }

  state_ = out.next_state;
  cursor_ = t + 1;
  ++steps_;
  done_ = cursor_ + 1 >= data_->size() || out.liquidation_event ||
          (cfg_.max_episode_steps != 0 && steps_ >= cfg_.max_episode_steps);
  mask_ = compute_legal_mask(state_, cfg_.risk, cfg_.action_mode);

  StepResult res;
  res.reward = reward;
  res.done = done_;
  StepInfo& info = res.info;
  info.reward_trace = rr.trace;
  info.cost_trace = out.cost_trace;
  info.executed_action = out.executed_action;
  info.proposed_action = action;
  info.violation = out.violation;
  info.liquidation_event = out.liquidation_event;
  info.mask = cfg_.fault == CausalityFault::mask_after_dispatch ? mask_ : mode_mask;
  info.mask_next = mask_;
  info.equity = state_.equity;
  info.cursor = t;
  info.timestamp_next = next.timestamp;
  info.prev_portfolio = prev;
  info.next_portfolio = state_;
  info.realized_delta = out.realized_delta;
  info.unrealized_delta = out.unrealized_delta;
  info.traded_lots = out.traded_lots;
  info.fills = std::move(out.fills);
  info.recent_trade_count = trade_count_window_;
  res.observation = observe();
  return res;
}

}  // namespace fxrl
