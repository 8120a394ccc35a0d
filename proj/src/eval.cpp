#include "fxrl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fxrl/error.hpp"

namespace fxrl {

namespace {

constexpr int kHoldId = 0;
constexpr int kLongId = 1;  // OPEN_LONG and TARGET_LONG share the id

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

double step_return(double prev, double next) { return prev != 0.0 ? (next - prev) / prev : 0.0; }

double closes_mean(std::span<const Bar> bars) {
  double s = 0.0;
  for (const Bar& b : bars) s += b.close;
  return s / static_cast<double>(bars.size());
}

void fnv_mix(std::uint64_t& h, const void* p, std::size_t n) {
  const auto* c = static_cast<const unsigned char*>(p);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= c[i];
    h *= 0x100000001b3ull;
  }
}

}  // namespace

int target_to_action(TargetAction target, const PolicyContext& ctx) {
  const LegalMask& mask = ctx.observation.mask;
  const int id = ctx.mode == ActionMode::simplified
                     ? static_cast<int>(target)
                     : static_cast<int>(adapt_simplified(target, ctx.state));
  return mask[static_cast<std::size_t>(id)] ? id : kHoldId;
}

int RandomPolicy::act(const PolicyContext& ctx) {
  const std::vector<int> legal = ctx.observation.mask.legal_actions();
  if (legal.empty()) throw ContractError("all-false legality mask");
  return legal[uniform_index(rng_, legal.size())];
}

int BuyAndHoldPolicy::act(const PolicyContext& ctx) {
  if (!ctx.state.position.is_flat()) entered_ = true;
  if (entered_) return kHoldId;
  return ctx.observation.mask[kLongId] ? kLongId : kHoldId;
}

MomentumPolicy::MomentumPolicy(std::size_t fast, std::size_t slow) : fast_(fast), slow_(slow) {
  if (fast == 0 || fast >= slow) throw ConfigError("momentum needs 0 < fast < slow");
}

int MomentumPolicy::act(const PolicyContext& ctx) {
  const auto& h = ctx.history;
  if (h.size() < slow_) return kHoldId;
  const double fast = closes_mean(h.last(fast_));
  const double slow = closes_mean(h.last(slow_));
  return target_to_action(fast > slow ? TargetAction::target_long : TargetAction::target_short, ctx);
}

MeanReversionPolicy::MeanReversionPolicy(std::size_t window, double num_std)
    : window_(window), k_(num_std) {
  if (window < 2 || !(num_std > 0.0)) throw ConfigError("mean reversion needs window >= 2 and k > 0");
}

int MeanReversionPolicy::act(const PolicyContext& ctx) {
  const auto& h = ctx.history;
  if (h.size() < window_) return kHoldId;
  const auto w = h.last(window_);
  const double mid = closes_mean(w);
  double ss = 0.0;
  for (const Bar& b : w) ss += (b.close - mid) * (b.close - mid);
  const double sd = std::sqrt(ss / static_cast<double>(window_));
  const double close = h.back().close;
  if (close > mid + k_ * sd) return target_to_action(TargetAction::target_short, ctx);
  if (close < mid - k_ * sd) return target_to_action(TargetAction::target_long, ctx);
  return kHoldId;
}

int GreedyQPolicy::act(const PolicyContext& ctx) {
  const Vector q = net_.forward(ctx.observation.flat);
  return masked_argmax(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
                       ctx.observation.mask);
}

const std::vector<std::string>& benchmark_names() {
  static const std::vector<std::string> kNames = {"random", "buy_and_hold", "momentum",
                                                  "mean_reversion", "hold"};
  return kNames;
}

std::unique_ptr<Policy> make_benchmark_policy(const std::string& name, const BenchmarkConfig& p,
                                              std::uint64_t seed) {
  if (name == "random") return std::make_unique<RandomPolicy>(seed);
  if (name == "buy_and_hold") return std::make_unique<BuyAndHoldPolicy>();
  if (name == "momentum") return std::make_unique<MomentumPolicy>(p.momentum_fast, p.momentum_slow);
  if (name == "mean_reversion") {
    return std::make_unique<MeanReversionPolicy>(p.bollinger_window, p.bollinger_k);
  }
  if (name == "hold") return std::make_unique<HoldPolicy>();
  throw ConfigError("unknown benchmark strategy '" + name + "'");
}

// ---------------------------------------------------------------------------

void TradeTracker::on_step(const StepInfo& info) {
  auto close_out = [&](const Fill& f) {
    current_.gross_pnl += f.realized;
    current_.commission += f.commission;
    current_.close_time = info.timestamp_next;
    current_.close_price = f.price;
    current_.liquidated = f.kind == LegKind::liquidation;
    current_.net_pnl = current_.gross_pnl + current_.rollover - current_.commission;
    trades_.push_back(current_);
    open_ = false;
  };
  // Trade legs happen at open_{t+1}; financing after them; liquidation last.
  for (const Fill& f : info.fills) {
    if (f.kind == LegKind::liquidation) continue;
    switch (f.kind) {
      case LegKind::open:
        current_ = TradeRecord{};
        current_.open_time = info.timestamp_next;
        current_.open_price = f.price;
        current_.direction = f.side == Side::buy ? Direction::long_side : Direction::short_side;
        current_.lots = f.lots;
        current_.commission = f.commission;
        held_lots_ = f.lots;
        open_ = true;
        break;
      case LegKind::add:
        current_.commission += f.commission;
        held_lots_ += f.lots;
        current_.lots = std::max(current_.lots, held_lots_);
        break;
      case LegKind::reduce:
        current_.gross_pnl += f.realized;
        current_.commission += f.commission;
        held_lots_ -= f.lots;
        break;
      case LegKind::close:
        close_out(f);
        break;
      case LegKind::liquidation:
        break;
    }
  }
  if (open_) current_.rollover += info.cost_trace.rollover;
  for (const Fill& f : info.fills) {
    if (f.kind == LegKind::liquidation && open_) close_out(f);
  }
}

void TradeTracker::finish(const PortfolioState& final_state, UtcTime final_time) {
  if (!open_) return;
  current_.gross_pnl += final_state.unrealized_pnl;
  current_.close_time = final_time;
  current_.close_price = final_state.mark_price;
  current_.open_at_end = true;
  current_.net_pnl = current_.gross_pnl + current_.rollover - current_.commission;
  trades_.push_back(current_);
  open_ = false;
}

// ---------------------------------------------------------------------------

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> kCols = {
      "cumulative_return", "annualized_return", "annualized_vol", "sharpe",
      "sortino",           "max_drawdown",      "win_rate",       "turnover",
      "trade_count",       "liquidation_count", "avg_pyramid_depth", "avg_martingale_depth"};
  return kCols;
}

void MetricsAccumulator::add_equity(double e) {
  if (samples_ == 0) {
    first_ = e;
    peak_ = e;
  } else {
    const double r = step_return(last_, e);
    ++n_ret_;
    const double delta = r - mean_;
    mean_ += delta / static_cast<double>(n_ret_);
    m2_ += delta * (r - mean_);
    const double down = std::min(r, 0.0);
    down_sq_ += down * down;
    peak_ = std::max(peak_, e);
  }
  if (peak_ > 0.0) mdd_ = std::max(mdd_, (peak_ - e) / peak_);
  last_ = e;
  ++samples_;
}

void MetricsAccumulator::add_step(const StepActivity& a) {
  ++steps_;
  turnover_ += a.traded_lots;
  pyr_sum_ += a.pyramid_depth;
  mart_sum_ += a.martingale_depth;
  if (a.liquidation) ++liquidations_;
}

namespace {

void fill_trade_stats(MetricsReport& m, const std::vector<TradeRecord>& trades) {
  m.trade_count = static_cast<std::int64_t>(trades.size());
  std::int64_t wins = 0;
  for (const TradeRecord& t : trades) wins += t.net_pnl > 0.0 ? 1 : 0;
  m.win_rate = trades.empty() ? 0.0 : static_cast<double>(wins) / static_cast<double>(trades.size());
}

void fill_return_stats(MetricsReport& m, double first, double last, std::int64_t n, double mean,
                       double sd, double downside) {
  const double sqrt_a = std::sqrt(kAnnualizationFactor);
  m.cumulative_return = first != 0.0 ? last / first - 1.0 : 0.0;
  const double growth = 1.0 + m.cumulative_return;
  if (n == 0) {
    m.annualized_return = 0.0;
  } else if (growth <= 0.0) {
    m.annualized_return = -1.0;
  } else {
    m.annualized_return = std::pow(growth, kAnnualizationFactor / static_cast<double>(n)) - 1.0;
  }
  m.annualized_vol = sd * sqrt_a;
  m.sharpe = sd > 0.0 ? mean / sd * sqrt_a : 0.0;
  m.sortino = downside > 0.0 ? mean / downside * sqrt_a : 0.0;
}

}  // namespace

MetricsReport MetricsAccumulator::finish(const std::vector<TradeRecord>& trades) const {
  MetricsReport m;
  const double sd = n_ret_ >= 2 ? std::sqrt(m2_ / static_cast<double>(n_ret_ - 1)) : 0.0;
  const double downside = n_ret_ > 0 ? std::sqrt(down_sq_ / static_cast<double>(n_ret_)) : 0.0;
  fill_return_stats(m, first_, last_, n_ret_, mean_, sd, downside);
  m.max_drawdown = std::clamp(mdd_, 0.0, 1.0);
  m.turnover = turnover_;
  m.liquidation_count = liquidations_;
  m.avg_pyramid_depth = steps_ > 0 ? pyr_sum_ / static_cast<double>(steps_) : 0.0;
  m.avg_martingale_depth = steps_ > 0 ? mart_sum_ / static_cast<double>(steps_) : 0.0;
  fill_trade_stats(m, trades);
  return m;
}

MetricsReport compute_metrics(const EquityCurve& curve, const std::vector<TradeRecord>& trades,
                              const std::vector<StepActivity>& steps) {
  if (curve.size() < 2) throw ContractError("metrics need at least two curve samples");
  MetricsAccumulator acc;
  for (double e : curve.equity) acc.add_equity(e);
  for (const StepActivity& s : steps) acc.add_step(s);
  return acc.finish(trades);
}

MetricsReport compute_metrics_naive(const EquityCurve& curve, const std::vector<TradeRecord>& trades,
                                    const std::vector<StepActivity>& steps) {
  if (curve.size() < 2) throw ContractError("metrics need at least two curve samples");
  const auto& e = curve.equity;
  std::vector<double> r;
  for (std::size_t i = 1; i < e.size(); ++i) r.push_back(step_return(e[i - 1], e[i]));
  const auto n = static_cast<double>(r.size());
  double mean = 0.0;
  for (double x : r) mean += x;
  mean /= n;
  double ss = 0.0, down = 0.0;
  for (double x : r) {
    ss += (x - mean) * (x - mean);
    down += std::min(x, 0.0) * std::min(x, 0.0);
  }
  const double sd = r.size() >= 2 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  MetricsReport m;
  fill_return_stats(m, e.front(), e.back(), static_cast<std::int64_t>(r.size()), mean, sd,
                    std::sqrt(down / n));
  double mdd = 0.0;
  for (std::size_t t = 0; t < e.size(); ++t) {
    double peak = e[0];
    for (std::size_t s = 0; s <= t; ++s) peak = std::max(peak, e[s]);
    if (peak > 0.0) mdd = std::max(mdd, (peak - e[t]) / peak);
  }
  m.max_drawdown = std::clamp(mdd, 0.0, 1.0);
  double pyr = 0.0, mart = 0.0;
  for (const StepActivity& s : steps) {
    m.turnover += s.traded_lots;
    pyr += s.pyramid_depth;
    mart += s.martingale_depth;
    m.liquidation_count += s.liquidation ? 1 : 0;
  }
  const auto ns = static_cast<double>(steps.size());
  m.avg_pyramid_depth = steps.empty() ? 0.0 : pyr / ns;
  m.avg_martingale_depth = steps.empty() ? 0.0 : mart / ns;
  fill_trade_stats(m, trades);
  return m;
}

// ---------------------------------------------------------------------------

RolloutResult rollout(Policy& policy, const EnvConfig& cfg, std::shared_ptr<const MarketSlice> data,
                      std::uint64_t seed, bool keep_steps) {
  Environment env(cfg, std::move(data));
  Observation obs = env.reset(seed);
  policy.reset();
  RolloutResult out;
  TradeTracker tracker;
  MetricsAccumulator acc;
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  out.initial_equity = env.state().equity;
  out.curve.timestamps.push_back(env.data().bars[env.cursor()].timestamp);
  out.curve.equity.push_back(env.state().equity);
  acc.add_equity(env.state().equity);
  UtcTime last_time = out.curve.timestamps.back();
  while (!env.done()) {
    const PolicyContext ctx{obs, env.history(), env.state(), cfg.action_mode};
    const int action = policy.act(ctx);
    StepResult res = env.step(action);
    const StepInfo& info = res.info;
    tracker.on_step(info);
    const Position& pos = info.next_portfolio.position;
    const StepActivity act{info.traded_lots, pos.pyramid_depth, pos.martingale_depth,
                           info.liquidation_event};
    out.activity.push_back(act);
    acc.add_step(act);
    out.curve.timestamps.push_back(info.timestamp_next);
    out.curve.equity.push_back(info.equity);
    acc.add_equity(info.equity);
    last_time = info.timestamp_next;
    out.violations += info.violation ? 1 : 0;
    out.total_commission += info.cost_trace.commission;
    out.total_rollover += info.cost_trace.rollover;
    const int executed = static_cast<int>(info.executed_action);
    fnv_mix(checksum, &executed, sizeof(executed));
    fnv_mix(checksum, &info.equity, sizeof(double));
    obs = std::move(res.observation);
    if (keep_steps) out.steps.push_back(std::move(res.info));
  }
  tracker.finish(env.state(), last_time);
  out.trades = tracker.trades();
  out.final_equity = env.state().equity;
  out.execution_checksum = checksum;
  out.metrics = acc.finish(out.trades);
  return out;
}

double reconciliation_gap(const RolloutResult& r) {
  double gross = 0.0;
  for (const TradeRecord& t : r.trades) gross += t.gross_pnl;
  return (r.final_equity - r.initial_equity) - (gross + r.total_rollover - r.total_commission);
}

// ---------------------------------------------------------------------------

namespace {

std::ofstream open_for_write(const std::filesystem::path& dest) {
  if (dest.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(dest.parent_path(), ec);
  }
  std::ofstream out(dest, std::ios::trunc);
  if (!out) throw Error("cannot write " + dest.string());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void emit_report(const std::vector<LabeledReport>& reports, const std::filesystem::path& dest) {
  if (reports.empty()) throw ContractError("emit_report needs at least one report");
  std::ofstream out = open_for_write(dest);
  out << "label";
  for (const auto& c : metrics_columns()) out << ',' << c;
  out << '\n';
  for (const LabeledReport& lr : reports) {
    if (lr.label.find_first_of(",\n") != std::string::npos) {
      throw ContractError("report label may not contain commas or newlines");
    }
    const MetricsReport& m = lr.report;
    out << lr.label << ',' << fmt17(m.cumulative_return) << ',' << fmt17(m.annualized_return) << ','
        << fmt17(m.annualized_vol) << ',' << fmt17(m.sharpe) << ',' << fmt17(m.sortino) << ','
        << fmt17(m.max_drawdown) << ',' << fmt17(m.win_rate) << ',' << fmt17(m.turnover) << ','
        << m.trade_count << ',' << m.liquidation_count << ',' << fmt17(m.avg_pyramid_depth) << ','
        << fmt17(m.avg_martingale_depth) << '\n';
  }
  if (!out) throw Error("failed writing " + dest.string());
}

std::vector<LabeledReport> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open report " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = split_csv(line);
  if (header.size() != metrics_columns().size() + 1 || header[0] != "label") {
    throw DataError(path.string() + ": unexpected report header");
  }
  std::vector<LabeledReport> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c = split_csv(line);
    if (c.size() != header.size()) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": wrong column count");
    }
    LabeledReport lr;
    lr.label = c[0];
    MetricsReport& m = lr.report;
    try {
      m.cumulative_return = std::stod(c[1]);
      m.annualized_return = std::stod(c[2]);
      m.annualized_vol = std::stod(c[3]);
      m.sharpe = std::stod(c[4]);
      m.sortino = std::stod(c[5]);
      m.max_drawdown = std::stod(c[6]);
      m.win_rate = std::stod(c[7]);
      m.turnover = std::stod(c[8]);
      m.trade_count = std::stoll(c[9]);
      m.liquidation_count = std::stoll(c[10]);
      m.avg_pyramid_depth = std::stod(c[11]);
      m.avg_martingale_depth = std::stod(c[12]);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": unparsable number");
    }
    out.push_back(lr);
  }
  return out;
}

void write_curve_csv(const EquityCurve& curve, const std::filesystem::path& dest) {
  std::ofstream out = open_for_write(dest);
  out << "step,timestamp,equity\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    out << i << ',' << format_iso8601(curve.timestamps[i]) << ',' << fmt17(curve.equity[i]) << '\n';
  }
  if (!out) throw Error("failed writing " + dest.string());
}

void write_trades_csv(const std::vector<TradeRecord>& trades, const std::filesystem::path& dest) {
  std::ofstream out = open_for_write(dest);
  out << "open_time,open_price,close_time,close_price,direction,lots,gross_pnl,commission,rollover,"
         "net_pnl,open_at_end,liquidated\n";
  for (const TradeRecord& t : trades) {
    out << format_iso8601(t.open_time) << ',' << fmt17(t.open_price) << ','
        << format_iso8601(t.close_time) << ',' << fmt17(t.close_price) << ','
        << (t.direction == Direction::long_side ? "long" : "short") << ',' << fmt17(t.lots) << ','
        << fmt17(t.gross_pnl) << ',' << fmt17(t.commission) << ',' << fmt17(t.rollover) << ','
        << fmt17(t.net_pnl) << ',' << (t.open_at_end ? 1 : 0) << ',' << (t.liquidated ? 1 : 0)
        << '\n';
  }
  if (!out) throw Error("failed writing " + dest.string());
}

}  // namespace fxrl
