#include "fxrl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "fxrl/data.hpp"
#include "fxrl/exec.hpp"

namespace fxrl {

namespace {

using Bytes = std::vector<unsigned char>;

void put(Bytes& b, double x) {
  unsigned char raw[sizeof(double)];
  std::memcpy(raw, &x, sizeof(double));
  b.insert(b.end(), raw, raw + sizeof(double));
}
void put(Bytes& b, bool x) { b.push_back(x ? 1 : 0); }

Bytes bytes_of(const std::vector<double>& v) {
  Bytes b;
  for (double x : v) put(b, x);
  return b;
}

Bytes bytes_of(const Observation& o) {
  Bytes b = bytes_of(o.flat);
  b.insert(b.end(), o.mask.bits().begin(), o.mask.bits().end());
  return b;
}

Bytes bytes_of(const RewardTrace& t, double reward) {
  Bytes b;
  for (const ComponentRecord& c : t.components) {
    put(b, c.raw);
    put(b, c.weight);
    put(b, c.weighted);
    put(b, c.enabled);
  }
  put(b, t.raw_sum);
  put(b, t.clipped);
  put(b, t.clip_hit);
  put(b, reward);
  return b;
}

// Hourly bars whose open gaps away from the previous close, so open_{t+1},
// close_t and close_{t+1} are pairwise distinct.
std::vector<Bar> gapped_fixture(std::size_t n, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.regime = Regime::random_walk;
  spec.volatility = 0.0012;
  std::vector<Bar> bars = generate_synthetic(spec, n, seed);
  for (std::size_t i = 1; i < bars.size(); ++i) {
    const double gap = (i % 2 ? 1.0 : -1.0) * (0.0003 + 1e-6 * static_cast<double>(i % 97));
    Bar& b = bars[i];
    b.open = bars[i - 1].close + gap;
    if (b.open == b.close) b.open += 0.00005;
    b.high = std::max({b.high, b.open, b.close});
    b.low = std::min({b.low, b.open, b.close});
  }
  return bars;
}

void set_all_prices(Bar& b, double price) {
  b.open = b.high = b.low = b.close = price;
}

void scale_prices(Bar& b, double f) {
  b.open *= f;
  b.high *= f;
  b.low *= f;
  b.close *= f;
}

constexpr double kSentinel = 9.87654321;

struct Fixture {
  std::vector<Bar> raw;
  FeatureSpec spec;
  double train_fraction = 1.0;
  ScalerParams scaler;  // frozen from the unmutated series

  std::size_t offset() const { return static_cast<std::size_t>(spec.warmup); }
  std::shared_ptr<const MarketSlice> slice(const std::vector<Bar>& bars) const {
    PreparedData p = prepare_dataset_with_scaler(bars, train_fraction, spec, scaler);
    return std::make_shared<const MarketSlice>(std::move(p.split.train));
  }
};

Fixture make_fixture(std::size_t n, std::uint64_t seed) {
  Fixture f;
  f.raw = gapped_fixture(n, seed);
  f.scaler = prepare_dataset(f.raw, f.train_fraction, f.spec).scaler;
  return f;
}

struct Trajectory {
  std::vector<Observation> obs;  // obs[s]: observation the s-th decision sees
  std::vector<StepInfo> info;    // info[s]: diagnostics of the s-th step
  std::vector<double> reward;
};

enum class Driver { random_legal, hold };

Trajectory drive(const EnvConfig& cfg, std::shared_ptr<const MarketSlice> slice, std::size_t steps,
                 std::uint64_t action_seed, Driver driver = Driver::random_legal) {
  auto env = make_conformance_env(cfg, std::move(slice));
  Rng rng(action_seed);
  Trajectory tr;
  tr.obs.push_back(env->reset(action_seed));
  for (std::size_t s = 0; s < steps && !env->done(); ++s) {
    int a = 0;
    if (driver == Driver::random_legal) {
      const auto legal = env->mask().legal_actions();
      a = legal[uniform_index(rng, legal.size())];
    }
    StepResult r = env->step(a);
    tr.obs.push_back(r.observation);
    tr.reward.push_back(r.reward);
    tr.info.push_back(std::move(r.info));
  }
  return tr;
}

EnvConfig env_config(const VerifyOptions& opt) {
  EnvConfig cfg;
  cfg.fault = opt.fault;
  return cfg;
}

std::string ratio(std::size_t ok, std::size_t total) {
  return std::to_string(ok) + "/" + std::to_string(total);
}

class InstanceCounter {
 public:
  InstanceCounter() : start_(Environment::instances_created()) {}
  std::size_t created() const { return Environment::instances_created() - start_; }

 private:
  std::size_t start_;
};

}  // namespace

bool ConformanceReport::all_pass() const {
  if (tests.empty()) return false;
  return std::all_of(tests.begin(), tests.end(), [](const TestResult& t) { return t.pass; });
}

std::unique_ptr<Environment> make_conformance_env(const EnvConfig& cfg,
                                                  std::shared_ptr<const MarketSlice> data) {
  return std::make_unique<Environment>(cfg, std::move(data));
}

TestResult test_feature_staleness(const VerifyOptions& opt) {
  TestResult res{"feature_staleness", false, ""};
  const InstanceCounter counter;
  const Fixture fx = make_fixture(420, opt.seed);
  const EnvConfig cfg = env_config(opt);
  const auto base_slice = fx.slice(fx.raw);
  const std::size_t L = cfg.window;
  const std::size_t max_s = base_slice->size() - L - 8;
  const Trajectory base = drive(cfg, base_slice, max_s, opt.seed + 1);

  Rng rng(derive_seed(opt.seed, Stream::env));
  std::size_t invariant = 0, controls_changed = 0;
  const auto probes = static_cast<std::size_t>(opt.probes);
  const std::size_t controls = std::max<std::size_t>(1, probes / 4);
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t s = uniform_index(rng, max_s);
    const std::size_t k = 1 + uniform_index(rng, 5);
    const std::size_t c = L - 1 + s;  // decision bar in slice coordinates
    std::vector<Bar> bars = fx.raw;
    set_all_prices(bars[fx.offset() + c + k], kSentinel);
    const Trajectory t = drive(cfg, fx.slice(bars), s, opt.seed + 1);
    if (t.obs.size() > s && bytes_of(t.obs[s]) == bytes_of(base.obs[s])) ++invariant;
  }
  // Flat control so a past sentinel cannot end the episode early.
  const Trajectory flat = drive(cfg, base_slice, max_s, opt.seed + 1, Driver::hold);
  for (std::size_t p = 0; p < controls; ++p) {
    const std::size_t s = uniform_index(rng, max_s);
    const std::size_t c = L - 1 + s;
    std::vector<Bar> bars = fx.raw;
    set_all_prices(bars[fx.offset() + c - 1], kSentinel);
    const Trajectory t = drive(cfg, fx.slice(bars), s, opt.seed + 1, Driver::hold);
    if (t.obs.size() > s && bytes_of(t.obs[s]) != bytes_of(flat.obs[s])) ++controls_changed;
  }
  const std::size_t envs = counter.created();
  res.pass = invariant == probes && controls_changed == controls && envs > 0;
  res.evidence = "future-bar sentinel left observation byte-identical in " + ratio(invariant, probes) +
                 " probes (k in 1..5); past-bar sentinel changed it in " +
                 ratio(controls_changed, controls) + "; " + std::to_string(envs) +
                 " production env instances";
  return res;
}

TestResult test_fill_price_rule(const VerifyOptions& opt) {
  TestResult res{"fill_price_rule", false, ""};
  const InstanceCounter counter;
  const Fixture fx = make_fixture(420, opt.seed + 11);
  const auto slice = fx.slice(fx.raw);
  std::size_t fills = 0, exact = 0, distinct = 0;
  std::size_t buys = 0, sells = 0;
  for (const bool frictionless : {true, false}) {
    EnvConfig cfg = env_config(opt);
    if (frictionless) {
      cfg.friction.spread_pips = 0.0;
      cfg.friction.slippage_pips = 0.0;
      cfg.friction.commission_per_lot = 0.0;
    }
    const Trajectory tr = drive(cfg, slice, slice->size(), opt.seed + 2);
    for (const StepInfo& info : tr.info) {
      const std::size_t t = info.cursor;
      const Bar& now = slice->bars[t];
      const Bar& next = slice->bars[t + 1];
      for (const Fill& f : info.fills) {
        if (f.kind == LegKind::liquidation) continue;
        ++fills;
        (f.side == Side::buy ? buys : sells) += 1;
        const double expected = quote_and_fill(f.side, next.open, cfg.friction);
        if (f.price == expected) ++exact;
        const double adj = f.price - expected + next.open;  // fill minus friction adjustment
        if (adj != now.close && adj != next.close) ++distinct;
      }
    }
  }
  const std::size_t envs = counter.created();
  res.pass = fills > 0 && buys > 0 && sells > 0 && exact == fills && distinct == fills && envs > 0;
  res.evidence = ratio(exact, fills) + " fills equal open_{t+1} plus the quoted adjustment (" +
                 std::to_string(buys) + " buys, " + std::to_string(sells) +
                 " sells, with and without friction); " + ratio(distinct, fills) +
                 " differ from close_t and close_{t+1}";
  return res;
}

TestResult test_reward_timing(const VerifyOptions& opt) {
  TestResult res{"reward_timing", false, ""};
  const InstanceCounter counter;
  const Fixture fx = make_fixture(420, opt.seed + 23);
  const EnvConfig cfg = env_config(opt);
  const auto base_slice = fx.slice(fx.raw);
  const std::size_t L = cfg.window;
  const std::size_t max_s = base_slice->size() - L - 8;
  const Trajectory base = drive(cfg, base_slice, max_s + 1, opt.seed + 3);
  const Trajectory base_hold = drive(cfg, base_slice, max_s + 1, opt.seed + 3, Driver::hold);

  Rng rng(derive_seed(opt.seed, Stream::replay));
  const auto probes = static_cast<std::size_t>(opt.probes);
  std::size_t invariant = 0, hold_invariant = 0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t s = uniform_index(rng, max_s);
    const std::size_t j = 2 + uniform_index(rng, 5);  // bar t+j, j >= 2
    const std::size_t c = L - 1 + s;
    std::vector<Bar> bars = fx.raw;
    scale_prices(bars[fx.offset() + c + j], 1.05);
    const auto slice = fx.slice(bars);
    const Trajectory t = drive(cfg, slice, s + 1, opt.seed + 3);
    if (t.info.size() > s && bytes_of(t.info[s].reward_trace, t.reward[s]) ==
                                 bytes_of(base.info[s].reward_trace, base.reward[s])) {
      ++invariant;
    }
    // Flat HOLD: nothing at or after t+1 can matter.
    std::vector<Bar> bars1 = fx.raw;
    scale_prices(bars1[fx.offset() + c + 1], 1.05);
    const Trajectory h = drive(cfg, fx.slice(bars1), s + 1, opt.seed + 3, Driver::hold);
    if (h.info.size() > s && bytes_of(h.info[s].reward_trace, h.reward[s]) ==
                                 bytes_of(base_hold.info[s].reward_trace, base_hold.reward[s])) {
      ++hold_invariant;
    }
  }
  // Negative control: steps holding a position must see close_{t+1}.
  std::vector<std::size_t> exposed;
  for (std::size_t s = 0; s < max_s; ++s) {
    if (!base.info[s].next_portfolio.position.is_flat()) exposed.push_back(s);
  }
  const std::size_t controls = std::min<std::size_t>(exposed.size(), std::max(1, opt.probes / 4));
  std::size_t changed = 0;
  for (std::size_t p = 0; p < controls; ++p) {
    const std::size_t s = exposed[uniform_index(rng, exposed.size())];
    const std::size_t c = L - 1 + s;
    std::vector<Bar> bars = fx.raw;
    scale_prices(bars[fx.offset() + c + 1], 1.05);
    const Trajectory t = drive(cfg, fx.slice(bars), s + 1, opt.seed + 3);
    if (t.info.size() > s && bytes_of(t.info[s].reward_trace, t.reward[s]) !=
                                 bytes_of(base.info[s].reward_trace, base.reward[s])) {
      ++changed;
    }
  }
  const std::size_t envs = counter.created();
  res.pass = invariant == probes && hold_invariant == probes && controls > 0 && changed == controls &&
             envs > 0;
  res.evidence = "reward trace unchanged by bars >= t+2 in " + ratio(invariant, probes) +
                 " probes; flat-hold reward unchanged by bar t+1 in " + ratio(hold_invariant, probes) +
                 "; bar t+1 changed exposed traces in " + ratio(changed, controls);
  return res;
}

TestResult test_scaler_leakage(const VerifyOptions& opt) {
  TestResult res{"scaler_leakage", false, ""};
  const std::vector<Bar> bars = gapped_fixture(600, opt.seed + 37);
  const FeatureSpec spec;
  const double frac = 0.7;
  auto prepare = [&](const std::vector<Bar>& b, double f) {
    return prepare_dataset(b, f, spec, opt.scaler_leak);
  };
  const PreparedData full = prepare(bars, frac);
  const std::size_t split = full.split.split_index;
  auto same = [](const ScalerParams& a, const ScalerParams& b) {
    return bytes_of(a.mean) == bytes_of(b.mean) && bytes_of(a.stdev) == bytes_of(b.stdev);
  };

  Rng rng(derive_seed(opt.seed, Stream::data_gen));
  const auto probes = static_cast<std::size_t>(opt.probes);
  std::size_t unchanged = 0;
  for (std::size_t p = 0; p < probes; ++p) {
    std::vector<Bar> b = bars;
    const std::size_t i = split + uniform_index(rng, bars.size() - split);
    scale_prices(b[i], 1.0 + 0.2 * (uniform01(rng) + 0.1));
    if (same(prepare(b, frac).scaler, full.scaler)) ++unchanged;
  }
  // Heldout removed entirely: the train slice alone at fraction 1.
  const std::vector<Bar> train_only(bars.begin(), bars.begin() + static_cast<std::ptrdiff_t>(split));
  const bool deleted_ok = same(prepare(train_only, 1.0).scaler, full.scaler);

  // Heldout rows are the raw causal features scaled by the train params.
  const auto raw_rows = compute_features(bars, spec);
  std::vector<FeatureRow> heldout_raw(raw_rows.begin() + static_cast<std::ptrdiff_t>(split - spec.warmup),
                                      raw_rows.end());
  const auto expected = apply_scaler(heldout_raw, full.scaler);
  bool reused = expected.size() == full.split.heldout.features.size() && !expected.empty();
  for (std::size_t i = 0; reused && i < expected.size(); ++i) {
    reused = bytes_of(expected[i].values) == bytes_of(full.split.heldout.features[i].values);
  }

  // Negative control: a perturbed train bar must move the moments.
  std::size_t moved = 0;
  const std::size_t controls = std::max<std::size_t>(1, probes / 4);
  for (std::size_t p = 0; p < controls; ++p) {
    std::vector<Bar> b = bars;
    const std::size_t i = static_cast<std::size_t>(spec.warmup) + uniform_index(rng, split - spec.warmup);
    scale_prices(b[i], 1.2);
    if (!same(prepare(b, frac).scaler, full.scaler)) ++moved;
  }
  res.pass = unchanged == probes && deleted_ok && reused && moved == controls;
  res.evidence = "heldout perturbation left scaler byte-identical in " + ratio(unchanged, probes) +
                 "; heldout deletion " + (deleted_ok ? "identical" : "CHANGED") +
                 "; heldout transform " + (reused ? "reuses" : "does NOT reuse") +
                 " train params; train perturbation moved params in " + ratio(moved, controls);
  return res;
}

TestResult test_mask_timing(const VerifyOptions& opt) {
  TestResult res{"mask_timing", false, ""};
  const InstanceCounter counter;
  const Fixture fx = make_fixture(1200, opt.seed + 41);
  const auto slice = fx.slice(fx.raw);
  const std::size_t steps = 1000;

  std::size_t checked = 0, reproduced = 0;
  for (const ActionMode mode : {ActionMode::extended, ActionMode::simplified}) {
    EnvConfig cfg = env_config(opt);
    cfg.action_mode = mode;
    const Trajectory tr = drive(cfg, slice, steps, opt.seed + 4);
    for (const StepInfo& info : tr.info) {
      ++checked;
      if (compute_legal_mask(info.prev_portfolio, cfg.risk, mode) == info.mask) ++reproduced;
    }
  }

  // Illegal proposals are coerced to HOLD, flagged, and leave the mask alone.
  const EnvConfig cfg = env_config(opt);
  std::size_t illegal_tried = 0, illegal_ok = 0;
  {
    auto env = make_conformance_env(cfg, slice);
    env->reset(opt.seed);
    Rng rng(opt.seed + 5);
    for (std::size_t s = 0; s < 400 && !env->done(); ++s) {
      const LegalMask before = env->mask();
      int proposal = -1;
      for (int a = 0; a < static_cast<int>(before.size()); ++a) {
        if (!before[static_cast<std::size_t>(a)]) proposal = a;
      }
      if (proposal < 0 || s % 3 != 0) {
        const auto legal = before.legal_actions();
        proposal = legal[uniform_index(rng, legal.size())];
        env->step(proposal);
        continue;
      }
      ++illegal_tried;
      const PortfolioState state_before = env->state();
      const StepResult r = env->step(proposal);
      if (r.info.violation && r.info.executed_action == Action::hold && r.info.mask == before &&
          r.info.proposed_action == proposal && r.info.prev_portfolio == state_before) {
        ++illegal_ok;
      }
    }
  }

  // Mask at t is insensitive to mutations of bar t+1.
  const std::size_t L = cfg.window;
  const std::size_t max_s = slice->size() - L - 4;
  const Trajectory base = drive(cfg, slice, max_s, opt.seed + 6);
  Rng rng(derive_seed(opt.seed, Stream::exploration));
  const auto probes = static_cast<std::size_t>(opt.probes);
  std::size_t sweep_ok = 0;
  for (std::size_t p = 0; p < probes; ++p) {
    const std::size_t s = uniform_index(rng, std::min<std::size_t>(max_s, base.info.size()));
    std::vector<Bar> bars = fx.raw;
    scale_prices(bars[fx.offset() + L - 1 + s + 1], 1.03);
    const Trajectory t = drive(cfg, fx.slice(bars), s + 1, opt.seed + 6);
    if (t.info.size() > s && t.info[s].mask == base.info[s].mask) ++sweep_ok;
  }
  const std::size_t envs = counter.created();
  res.pass = checked > 0 && reproduced == checked && illegal_tried > 0 && illegal_ok == illegal_tried &&
             sweep_ok == probes && envs > 0;
  res.evidence = "stored mask recomputed from the pre-dispatch state in " + ratio(reproduced, checked) +
                 " steps (both modes); illegal proposals coerced and logged in " +
                 ratio(illegal_ok, illegal_tried) + "; mask unchanged by bar t+1 in " +
                 ratio(sweep_ok, probes);
  return res;
}

ConformanceReport run_conformance(const VerifyOptions& opt) {
  ConformanceReport r;
  r.tests.push_back(test_feature_staleness(opt));
  r.tests.push_back(test_fill_price_rule(opt));
  r.tests.push_back(test_reward_timing(opt));
  r.tests.push_back(test_scaler_leakage(opt));
  r.tests.push_back(test_mask_timing(opt));
  return r;
}

ConformanceReport run_sensitivity(const VerifyOptions& opt) {
  ConformanceReport r;
  auto detect = [&](const std::string& label, TestResult (*fn)(const VerifyOptions&),
                    VerifyOptions broken) {
    const TestResult t = fn(broken);
    r.tests.push_back({label, !t.pass, t.evidence});
  };
  VerifyOptions o = opt;
  o.fault = CausalityFault::peek_future_features;
  detect("feature_staleness detects peek_future_features", test_feature_staleness, o);
  o.fault = CausalityFault::fill_at_close;
  detect("fill_price_rule detects fill_at_close", test_fill_price_rule, o);
  o.fault = CausalityFault::mark_at_future_close;
  detect("reward_timing detects mark_at_future_close", test_reward_timing, o);
  o = opt;
  o.scaler_leak = true;
  detect("scaler_leakage detects fit_on_all_rows", test_scaler_leakage, o);
  o = opt;
  o.fault = CausalityFault::mask_after_dispatch;
  detect("mask_timing detects mask_after_dispatch", test_mask_timing, o);
  return r;
}

std::string format_report(const ConformanceReport& r) {
  std::ostringstream out;
  for (const TestResult& t : r.tests) {
    out << (t.pass ? "PASS " : "FAIL ") << t.name << ": " << t.evidence << "\n";
  }
  out << (r.all_pass() ? "overall: PASS" : "overall: FAIL") << "\n";
  return out.str();
}

}  // namespace fxrl
