#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "fxrl/exec.hpp"

namespace fxrl {

// Evaluation order is this enum order; changing it changes every logged sum.
enum class Component : std::size_t {
  profit = 0,
  holding,
  volatility,
  drawdown,
  transaction,
  overtrading,
  pyramiding,
  martingale,
  margin_utilization,
  liquidation,
  constraint_violation,
};

inline constexpr std::size_t kComponentCount = 11;

// Config/log key for each component (same order as Component).
const std::array<std::string, kComponentCount>& component_keys();
std::size_t component_index_from_key(const std::string& key);

struct ComponentGate {
  bool enabled = true;
  double weight = 0.0;
  bool operator==(const ComponentGate&) const = default;
};

struct RewardParams {
  double holding_max_drawdown = 0.05;
  double severe_drawdown = 0.20;
  double severe_multiplier = 4.0;
  int overtrading_window = 50;
  int overtrading_threshold = 10;
  int volatility_window = 20;
  double margin_threshold = 0.5;
  bool operator==(const RewardParams&) const = default;
};

enum class NormalizationMode { clip_only, running };

struct RewardConfig {
  std::array<ComponentGate, kComponentCount> gates{};
  double clip_min = -1.0;
  double clip_max = 1.0;
  NormalizationMode normalization = NormalizationMode::clip_only;
  RewardParams params;

  const ComponentGate& gate(Component c) const { return gates[static_cast<std::size_t>(c)]; }
  ComponentGate& gate(Component c) { return gates[static_cast<std::size_t>(c)]; }
  bool operator==(const RewardConfig&) const = default;
};

// Baseline weights, all enabled.
RewardConfig full_reward_config();

// r1 (profit only) .. r7 (all eleven). Intermediate variants enable components
// cumulatively in evaluation order: r2 +holding,volatility; r3 +drawdown,
// transaction; r4 +overtrading,pyramiding; r5 +martingale,margin; r6
// +liquidation; r7 +constraint.
RewardConfig make_ablation_config(int variant);
RewardConfig make_ablation_config(const std::string& variant);  // "r1".."r7"
// Number of enabled components for each variant r1..r7.
std::size_t ablation_enabled_count(int variant);

// Everything one reward evaluation reads.
struct TransitionTrace {
  PortfolioState prev_portfolio;
  PortfolioState next_portfolio;
  Action executed_action = Action::hold;
  int proposed_action = 0;
  CostTrace cost_trace;
  bool violation = false;
  bool liquidation_event = false;
  int recent_trade_count = 0;
  // Most recent per-step equity returns, oldest first, including this step.
  std::vector<double> equity_return_history;
  int depth_cap = 3;
};

using ComponentValues = std::array<double, kComponentCount>;

struct ComponentRecord {
  double raw = 0.0;
  double weight = 0.0;
  double weighted = 0.0;
  bool enabled = false;
  bool operator==(const ComponentRecord&) const = default;
};

struct RewardTrace {
  std::array<ComponentRecord, kComponentCount> components{};
  double raw_sum = 0.0;
  double clipped = 0.0;
  bool clip_hit = false;
  bool operator==(const RewardTrace&) const = default;
};

// Disabled components are exactly 0.
ComponentValues compute_components(const TransitionTrace& trace, const RewardConfig& cfg);

struct RewardResult {
  double reward = 0.0;
  RewardTrace trace;
};

RewardResult aggregate(const ComponentValues& components, const RewardConfig& cfg);

inline double clip(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

// Alternative to plain clipping: divides the raw reward by the running
// standard deviation of raw rewards seen so far, then clips.
class RunningNormalizer {
 public:
  double normalize(double raw, double clip_min, double clip_max);
  void reset() { *this = RunningNormalizer{}; }

 private:
  long long count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace fxrl
