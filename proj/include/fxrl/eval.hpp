#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fxrl/agent.hpp"
#include "fxrl/config.hpp"
#include "fxrl/env.hpp"

namespace fxrl {

// Hourly bars on a 24x5 calendar.
inline constexpr double kAnnualizationFactor = 24.0 * 252.0;

// What a policy may look at when deciding at close_t.
struct PolicyContext {
  const Observation& observation;
  std::span<const Bar> history;  // bars[0..t]
  const PortfolioState& state;
  ActionMode mode;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  virtual void reset() {}
  // Returns an action id of the active mode.
  virtual int act(const PolicyContext& ctx) = 0;
};

class HoldPolicy : public Policy {
 public:
  std::string name() const override { return "hold"; }
  int act(const PolicyContext&) override { return 0; }
};

class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : seed_(seed), rng_(seed) {}
  std::string name() const override { return "random"; }
  void reset() override { rng_.seed(seed_); }
  int act(const PolicyContext& ctx) override;

 private:
  std::uint64_t seed_;
  Rng rng_;
};

class BuyAndHoldPolicy : public Policy {
 public:
  std::string name() const override { return "buy_and_hold"; }
  void reset() override { entered_ = false; }
  int act(const PolicyContext& ctx) override;

 private:
  bool entered_ = false;
};

class MomentumPolicy : public Policy {
 public:
  MomentumPolicy(std::size_t fast, std::size_t slow);
  std::string name() const override { return "momentum"; }
  int act(const PolicyContext& ctx) override;

 private:
  std::size_t fast_;
  std::size_t slow_;
};

class MeanReversionPolicy : public Policy {
 public:
  MeanReversionPolicy(std::size_t window, double num_std);
  std::string name() const override { return "mean_reversion"; }
  int act(const PolicyContext& ctx) override;

 private:
  std::size_t window_;
  double k_;
};

// Epsilon = 0 masked argmax over the online network.
class GreedyQPolicy : public Policy {
 public:
  explicit GreedyQPolicy(const QNetwork& net) : net_(net) {}
  std::string name() const override { return "greedy_q"; }
  int act(const PolicyContext& ctx) override;

 private:
  const QNetwork& net_;
};

// Translates a target-position intent into an id of the active mode, holding
// when the translated action is not legal.
int target_to_action(TargetAction target, const PolicyContext& ctx);

// random | buy_and_hold | momentum | mean_reversion | hold
std::unique_ptr<Policy> make_benchmark_policy(const std::string& name, const BenchmarkConfig& params,
                                              std::uint64_t seed);
const std::vector<std::string>& benchmark_names();

struct EquityCurve {
  std::vector<UtcTime> timestamps;
  std::vector<double> equity;

  std::size_t size() const { return equity.size(); }
};

// One position lifecycle, flat to flat. A position still open when the
// rollout ends is closed notionally at the last mark.
struct TradeRecord {
  UtcTime open_time;
  double open_price = 0.0;
  UtcTime close_time;
  double close_price = 0.0;
  Direction direction = Direction::flat;
  double lots = 0.0;        // peak size held
  double gross_pnl = 0.0;   // price PnL at fill prices
  double commission = 0.0;
  double rollover = 0.0;    // signed financing
  double net_pnl = 0.0;     // gross + rollover - commission
  bool open_at_end = false;
  bool liquidated = false;
};

// Folds per-step execution details into TradeRecords.
class TradeTracker {
 public:
  void on_step(const StepInfo& info);
  // Closes out an open position at the final mark.
  void finish(const PortfolioState& final_state, UtcTime final_time);
  const std::vector<TradeRecord>& trades() const { return trades_; }

 private:
  std::vector<TradeRecord> trades_;
  bool open_ = false;
  double held_lots_ = 0.0;
  TradeRecord current_;
};

struct MetricsReport {
  double cumulative_return = 0.0;
  double annualized_return = 0.0;
  double annualized_vol = 0.0;
  double sharpe = 0.0;
  double sortino = 0.0;
  double max_drawdown = 0.0;
  double win_rate = 0.0;
  double turnover = 0.0;
  std::int64_t trade_count = 0;
  std::int64_t liquidation_count = 0;
  double avg_pyramid_depth = 0.0;
  double avg_martingale_depth = 0.0;

  bool operator==(const MetricsReport&) const = default;
};

const std::vector<std::string>& metrics_columns();

// Per-step inputs metrics need beyond the curve.
struct StepActivity {
  double traded_lots = 0.0;
  int pyramid_depth = 0;
  int martingale_depth = 0;
  bool liquidation = false;
};

// Single-pass accumulator; O(1) state.
class MetricsAccumulator {
 public:
  void add_equity(double equity);
  void add_step(const StepActivity& a);
  MetricsReport finish(const std::vector<TradeRecord>& trades) const;

 private:
  std::int64_t samples_ = 0;
  double first_ = 0.0;
  double last_ = 0.0;
  double peak_ = 0.0;
  double mdd_ = 0.0;
  std::int64_t n_ret_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double down_sq_ = 0.0;
  std::int64_t steps_ = 0;
  double turnover_ = 0.0;
  double pyr_sum_ = 0.0;
  double mart_sum_ = 0.0;
  std::int64_t liquidations_ = 0;
};

MetricsReport compute_metrics(const EquityCurve& curve, const std::vector<TradeRecord>& trades,
                              const std::vector<StepActivity>& steps);
// Direct quadratic-time recomputation used as a test oracle.
MetricsReport compute_metrics_naive(const EquityCurve& curve, const std::vector<TradeRecord>& trades,
                                    const std::vector<StepActivity>& steps);

struct RolloutResult {
  EquityCurve curve;
  std::vector<TradeRecord> trades;
  std::vector<StepActivity> activity;
  std::vector<StepInfo> steps;  // filled when requested
  MetricsReport metrics;
  std::int64_t violations = 0;
  double total_commission = 0.0;
  double total_rollover = 0.0;
  double initial_equity = 0.0;
  double final_equity = 0.0;
  // FNV-1a over (executed action, equity bits) per step.
  std::uint64_t execution_checksum = 0;
};

// One full episode from reset through env.step; the only execution path for
// benchmarks and learned policies alike.
RolloutResult rollout(Policy& policy, const EnvConfig& cfg, std::shared_ptr<const MarketSlice> data,
                      std::uint64_t seed = 0, bool keep_steps = false);

// final - initial minus (sum gross + sum rollover - sum commission).
double reconciliation_gap(const RolloutResult& r);

struct LabeledReport {
  std::string label;
  MetricsReport report;
};

void emit_report(const std::vector<LabeledReport>& reports, const std::filesystem::path& dest);
std::vector<LabeledReport> read_report(const std::filesystem::path& path);
void write_curve_csv(const EquityCurve& curve, const std::filesystem::path& dest);
void write_trades_csv(const std::vector<TradeRecord>& trades, const std::filesystem::path& dest);

}  // namespace fxrl
