#include "fxrl/reward.hpp"

#include <cmath>

#include "fxrl/error.hpp"

namespace fxrl {

const std::array<std::string, kComponentCount>& component_keys() {
  static const std::array<std::string, kComponentCount> kKeys = {
      "profit",          "holding",  "volatility",         "drawdown",
      "transaction",     "overtrading", "pyramid_penalty", "martingale_penalty",
      "margin",          "liquidation", "constraint"};
  return kKeys;
}

std::size_t component_index_from_key(const std::string& key) {
  const auto& keys = component_keys();
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (keys[i] == key) return i;
  }
  throw ConfigError("unknown reward component '" + key + "'");
}

RewardConfig full_reward_config() {
  static constexpr std::array<double, kComponentCount> kWeights = {
      1.00, 0.03, 0.01, 0.05, 0.10, 0.02, 0.05, 0.12, 0.05, 2.00, 0.10};
  RewardConfig cfg;
  for (std::size_t i = 0; i < kComponentCount; ++i) cfg.gates[i] = {true, kWeights[i]};
  return cfg;
}

std::size_t ablation_enabled_count(int variant) {
  static constexpr std::array<std::size_t, 7> kCounts = {1, 3, 5, 7, 9, 10, 11};
  if (variant < 1 || variant > 7) {
    throw ConfigError("unknown ablation variant r" + std::to_string(variant));
  }
  return kCounts[static_cast<std::size_t>(variant - 1)];
}

RewardConfig make_ablation_config(int variant) {
  RewardConfig cfg = full_reward_config();
  const std::size_t enabled = ablation_enabled_count(variant);
  for (std::size_t i = enabled; i < kComponentCount; ++i) cfg.gates[i].enabled = false;
  return cfg;
}

RewardConfig make_ablation_config(const std::string& variant) {
  if (variant.size() == 2 && variant[0] == 'r' && variant[1] >= '1' && variant[1] <= '7') {
    return make_ablation_config(variant[1] - '0');
  }
  throw ConfigError("unknown ablation variant '" + variant + "'");
}

ComponentValues compute_components(const TransitionTrace& tr, const RewardConfig& cfg) {
  ComponentValues c{};
  const PortfolioState& prev = tr.prev_portfolio;
  const PortfolioState& next = tr.next_portfolio;
  const RewardParams& p = cfg.params;
  const double cap = tr.depth_cap > 0 ? static_cast<double>(tr.depth_cap) : 1.0;
  auto on = [&](Component k) { return cfg.gate(k).enabled; };
  auto set = [&](Component k, double v) { c[static_cast<std::size_t>(k)] = v; };

  if (on(Component::profit) && prev.equity != 0.0) {
    set(Component::profit, (next.equity - prev.equity) / prev.equity);
  }
  if (on(Component::holding)) {
    const bool bonus = !next.position.is_flat() && next.unrealized_pnl > 0.0 &&
                       next.current_drawdown < p.holding_max_drawdown;
    set(Component::holding, bonus ? 1.0 : 0.0);
  }
  if (on(Component::volatility)) {
    const auto& h = tr.equity_return_history;
    if (h.size() >= 2) {
      double mean = 0.0;
      for (double x : h) mean += x;
      mean /= static_cast<double>(h.size());
      double ss = 0.0;
      for (double x : h) ss += (x - mean) * (x - mean);
      set(Component::volatility, -std::sqrt(ss / static_cast<double>(h.size())));
    }
  }
  if (on(Component::drawdown)) {
    const double inc = std::max(0.0, next.current_drawdown - prev.current_drawdown);
    const double mult = next.current_drawdown > p.severe_drawdown ? 1.0 + p.severe_multiplier : 1.0;
    set(Component::drawdown, -inc * mult);
  }
  if (on(Component::transaction) && prev.equity != 0.0) {
    const CostTrace& k = tr.cost_trace;
    set(Component::transaction,
        -(k.spread_cost + k.slippage_cost + k.commission + std::fabs(k.rollover)) / prev.equity);
  }
  if (on(Component::overtrading) && p.overtrading_window > 0) {
    const double excess = std::max(0, tr.recent_trade_count - p.overtrading_threshold);
    set(Component::overtrading, clip(-excess / p.overtrading_window, -1.0, 0.0));
  }
  if (on(Component::pyramiding) && is_pyramid(tr.executed_action)) {
    set(Component::pyramiding, -next.position.pyramid_depth / cap);
  }
  if (on(Component::martingale) && is_martingale(tr.executed_action)) {
    set(Component::martingale, -next.position.martingale_depth / cap);
  }
  if (on(Component::margin_utilization)) {
    const double over = std::max(0.0, next.margin_utilization - p.margin_threshold);
    const double span = 1.0 - p.margin_threshold;
    set(Component::margin_utilization, span > 0.0 ? -(over * over) / (span * span) : 0.0);
  }
  if (on(Component::liquidation) && tr.liquidation_event) set(Component::liquidation, -1.0);
  if (on(Component::constraint_violation) && tr.violation) {
    set(Component::constraint_violation, -1.0);
  }
  return c;
}

RewardResult aggregate(const ComponentValues& components, const RewardConfig& cfg) {
  RewardResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const ComponentGate& g = cfg.gates[i];
    ComponentRecord& rec = out.trace.components[i];
    rec.enabled = g.enabled;
    rec.raw = g.enabled ? components[i] : 0.0;
    rec.weight = g.weight;
    rec.weighted = g.weight * rec.raw;
    sum += rec.weighted;
  }
  out.trace.raw_sum = sum;
  out.trace.clipped = clip(sum, cfg.clip_min, cfg.clip_max);
  out.trace.clip_hit = out.trace.clipped != sum;
  out.reward = out.trace.clipped;
  return out;
}

double RunningNormalizer::normalize(double raw, double clip_min, double clip_max) {
  ++count_;
  const double delta = raw - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta * (raw - mean_);
  const double var = count_ > 1 ? m2_ / static_cast<double>(count_) : 0.0;
  const double sd = std::sqrt(var);
  return clip(sd > 1e-8 ? raw / sd : raw, clip_min, clip_max);
}

}  // namespace fxrl
