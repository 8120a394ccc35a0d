#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <span>
#include <vector>

#include "fxrl/actions.hpp"
#include "fxrl/data.hpp"
#include "fxrl/exec.hpp"
#include "fxrl/reward.hpp"

namespace fxrl {

inline constexpr std::size_t kPortfolioDim = 10;

// d_flat = L * d_feat + d_port + n_a
inline constexpr std::size_t flat_dimension(std::size_t window, std::size_t d_feat,
                                            std::size_t n_actions) {
  return window * d_feat + kPortfolioDim + n_actions;
}

// Test-only switches that deliberately break one causality guard each. The
// conformance suite uses them to prove its checks are sensitive.
enum class CausalityFault {
  none,
  peek_future_features,  // observation window ends at t+1
  fill_at_close,         // fills anchored at close_{t+1}
  mark_at_future_close,  // mark (and reward) at close_{t+2}
  mask_after_dispatch,   // stored mask computed from the post-trade state
};

struct EnvConfig {
  ActionMode action_mode = ActionMode::extended;
  std::size_t window = 24;
  double initial_capital = 100000.0;
  FrictionConfig friction;
  RiskConfig risk;
  RewardConfig reward = full_reward_config();
  // 0 = run to the end of the slice.
  std::size_t max_episode_steps = 0;
  CausalityFault fault = CausalityFault::none;
};

void validate(const EnvConfig& cfg);

LegalMask compute_legal_mask(const PortfolioState& state, const RiskConfig& r, ActionMode mode);

Action adapt_simplified(TargetAction a, const PortfolioState& state);

struct Observation {
  std::vector<double> market;     // window x d_feat, row-major, oldest row first
  std::vector<double> portfolio;  // kPortfolioDim
  LegalMask mask;
  std::vector<double> flat;

  bool operator==(const Observation&) const = default;
};

std::vector<double> portfolio_vector(const PortfolioState& s, const EnvConfig& cfg);

Observation build_observation(std::span<const FeatureRow> rows, const PortfolioState& state,
                              const LegalMask& mask, const EnvConfig& cfg);

struct StepInfo {
  RewardTrace reward_trace;
  CostTrace cost_trace;
  Action executed_action = Action::hold;
  int proposed_action = 0;
  bool violation = false;
  bool liquidation_event = false;
  LegalMask mask;       // active-mode mask at close_t, as stored with the transition
  LegalMask mask_next;  // active-mode mask at close_{t+1}
  double equity = 0.0;

  // Diagnostics beyond the fixed key set.
  std::size_t cursor = 0;  // bar index t this step decided at
  UtcTime timestamp_next;
  PortfolioState prev_portfolio;
  PortfolioState next_portfolio;
  double realized_delta = 0.0;
  double unrealized_delta = 0.0;
  double traded_lots = 0.0;
  std::vector<Fill> fills;
  int recent_trade_count = 0;
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

class Environment {
 public:
  Environment(EnvConfig cfg, std::shared_ptr<const MarketSlice> data);

  Observation reset(std::uint64_t seed);
  Observation reset(std::uint64_t seed, std::shared_ptr<const MarketSlice> data);
  StepResult step(int action);

  const EnvConfig& config() const { return cfg_; }
  const PortfolioState& state() const { return state_; }
  const MarketSlice& data() const { return *data_; }
  std::size_t cursor() const { return cursor_; }
  bool done() const { return done_; }
  bool started() const { return started_; }
  std::size_t n_actions() const { return action_count(cfg_.action_mode); }
  std::size_t feature_dim() const { return d_feat_; }
  std::size_t flat_dim() const { return flat_dimension(cfg_.window, d_feat_, n_actions()); }
  const LegalMask& mask() const { return mask_; }
  // Bars up to and including close_t.
  std::span<const Bar> history() const;
  // Steps in a full episode over the attached slice.
  std::size_t episode_length() const;

  // Total Environment instances constructed in this process.
  static std::size_t instances_created();

 private:
  Observation observe() const;

  EnvConfig cfg_;
  std::shared_ptr<const MarketSlice> data_;
  std::size_t d_feat_ = 0;
  PortfolioState state_;
  LegalMask mask_;
  std::size_t cursor_ = 0;
  std::size_t steps_ = 0;
  bool started_ = false;
  bool done_ = false;
  std::uint64_t seed_ = 0;
  std::deque<double> equity_returns_;
  std::deque<int> trade_flags_;
  int trade_count_window_ = 0;
  RunningNormalizer normalizer_;
};

}  // namespace fxrl
