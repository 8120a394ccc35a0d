#include <doctest.h>

#include "fxrl/env.hpp"
#include "fxrl/error.hpp"
#include "helpers.hpp"

using namespace fxrl;
using fxrl::testing::frictionless;
using fxrl::testing::synthetic_slice;

namespace {

std::vector<int> legal(const LegalMask& m) { return m.legal_actions(); }

PortfolioState with_position(Direction d, double pnl_sign = 1.0, int pyr = 0) {
  PortfolioState s = initial_portfolio(100000.0, 1.1);
  s.position = Position{d, 1, 0.1, 1.1, pyr, 0};
  s = mark_to_market(s, 1.1 + pnl_sign * sign_of(d) * 0.001, 30.0);
  return s;
}

}  // namespace

TEST_CASE("flat mask with ample margin allows hold and the two opens") {
  const PortfolioState s = initial_portfolio(100000.0, 1.1);
  CHECK(legal(compute_legal_mask(s, {}, ActionMode::extended)) == std::vector<int>{0, 1, 2});
}

TEST_CASE("pyramid at the depth cap is illegal") {
  RiskConfig r;
  const PortfolioState s = with_position(Direction::long_side, 1.0, r.depth_cap);
  const LegalMask m = compute_legal_mask(s, r, ActionMode::extended);
  CHECK_FALSE(m[static_cast<std::size_t>(Action::pyramid_long)]);
  CHECK(m[static_cast<std::size_t>(Action::close)]);
  CHECK(compute_legal_mask(with_position(Direction::long_side), r, ActionMode::extended)
            [static_cast<std::size_t>(Action::pyramid_long)]);
}

TEST_CASE("flat with zero free margin allows only hold") {
  PortfolioState s = initial_portfolio(100000.0, 1.1);
  s.free_margin = 0.0;
  CHECK(legal(compute_legal_mask(s, {}, ActionMode::extended)) == std::vector<int>{0});
  CHECK(legal(compute_legal_mask(s, {}, ActionMode::simplified)) == std::vector<int>{0});
}

TEST_CASE("martingale needs an open loss and scaling switches gate the adds") {
  RiskConfig r;
  const auto winning = compute_legal_mask(with_position(Direction::short_side, 1.0), r, ActionMode::extended);
  const auto losing = compute_legal_mask(with_position(Direction::short_side, -1.0), r, ActionMode::extended);
  CHECK_FALSE(winning[static_cast<std::size_t>(Action::martingale_short)]);
  CHECK(losing[static_cast<std::size_t>(Action::martingale_short)]);
  CHECK_FALSE(losing[static_cast<std::size_t>(Action::martingale_long)]);
  r.allow_pyramid = false;
  r.allow_martingale = false;
  const auto off = compute_legal_mask(with_position(Direction::short_side, -1.0), r, ActionMode::extended);
  for (Action a : {Action::pyramid_long, Action::pyramid_short, Action::martingale_long, Action::martingale_short}) {
    CHECK_FALSE(off[static_cast<std::size_t>(a)]);
  }
}

TEST_CASE("observation dimensioning") {
  CHECK(flat_dimension(24, 19, 10) == 24 * 19 + 10 + 10);
  CHECK(flat_dimension(24, 19, 10) == 476);
  CHECK(flat_dimension(24, 19, 3) == 469);
  auto slice = synthetic_slice(400, 1);
  EnvConfig cfg;
  Environment ext(cfg, slice);
  CHECK(ext.feature_dim() == 19);
  CHECK(ext.flat_dim() == 476);
  CHECK(ext.reset(1).flat.size() == 476);
  cfg.action_mode = ActionMode::simplified;
  Environment simp(cfg, slice);
  CHECK(simp.flat_dim() == 469);
  CHECK(simp.reset(1).flat.size() == 469);
}

TEST_CASE("build_observation rejects a wrong window or mask width") {
  auto slice = synthetic_slice(200, 2);
  const EnvConfig cfg;
  const PortfolioState s = initial_portfolio(100000.0, 1.1);
  const LegalMask m = compute_legal_mask(s, cfg.risk, ActionMode::extended);
  std::span<const FeatureRow> rows(slice->features.data(), 23);
  CHECK_THROWS_AS(build_observation(rows, s, m, cfg), ContractError);
  std::span<const FeatureRow> ok(slice->features.data(), 24);
  CHECK_THROWS_AS(build_observation(ok, s, LegalMask(3, true), cfg), ContractError);
  CHECK(build_observation(ok, s, m, cfg).flat.size() == 476);
}

TEST_CASE("fresh reset portfolio vector") {
  const EnvConfig cfg;
  const auto v = portfolio_vector(initial_portfolio(cfg.initial_capital, 1.1), cfg);
  REQUIRE(v.size() == kPortfolioDim);
  CHECK(v[5] == 0.0);  // direction
  CHECK(v[7] == 0.0);
  CHECK(v[8] == 0.0);
  CHECK(v[9] == 0.0);  // drawdown
  CHECK(v[4] == 0.0);  // margin utilization
}

TEST_CASE("hold while flat and frictionless leaves equity and profit unchanged") {
  Environment env(frictionless(), synthetic_slice(300, 3));
  env.reset(1);
  const StepResult r = env.step(0);
  CHECK(r.info.equity == 100000.0);
  CHECK(r.info.reward_trace.components[static_cast<std::size_t>(Component::profit)].raw == 0.0);
}

TEST_CASE("open long then a 10 pip rise rewards the profit component") {
  const FrictionConfig f = frictionless().friction;
  const RiskConfig r;
  const UtcTime t = make_utc(2023, 1, 3, 10);
  const PortfolioState s0 = initial_portfolio(100000.0, 1.1);
  const StepOutcome a = execute(s0, Action::open_long, {1.1, 1.1, 1.1, t}, f, r,
                                compute_legal_mask(s0, r, ActionMode::extended), 100000.0);
  const StepOutcome b = execute(a.next_state, Action::hold, {1.1, 1.1, 1.1010, t.plus_hours(1)}, f, r,
                                compute_legal_mask(a.next_state, r, ActionMode::extended), 100000.0);
  TransitionTrace tr;
  tr.prev_portfolio = a.next_state;
  tr.next_portfolio = b.next_state;
  const RewardConfig cfg = full_reward_config();
  const auto c = compute_components(tr, cfg);
  CHECK(c[0] == doctest::Approx(10.0 / 100000.0).epsilon(1e-9));
  CHECK(aggregate(c, cfg).reward > 0.0);
}

TEST_CASE("illegal proposal is coerced, logged and penalized") {
  Environment env(EnvConfig{}, synthetic_slice(300, 4));
  env.reset(1);
  const StepResult r = env.step(static_cast<int>(Action::pyramid_long));
  CHECK(r.info.violation);
  CHECK(r.info.executed_action == Action::hold);
  CHECK(r.info.proposed_action == static_cast<int>(Action::pyramid_long));
  const auto& rec = r.info.reward_trace.components[static_cast<std::size_t>(Component::constraint_violation)];
  CHECK(rec.raw == -1.0);
  CHECK(rec.weighted == doctest::Approx(-0.10).epsilon(1e-15));
}

TEST_CASE("simplified adapter maps targets by current direction") {
  const PortfolioState flat = initial_portfolio(100000.0, 1.1);
  CHECK(adapt_simplified(TargetAction::target_long, flat) == Action::open_long);
  CHECK(adapt_simplified(TargetAction::target_short, flat) == Action::open_short);
  CHECK(adapt_simplified(TargetAction::target_long, with_position(Direction::short_side)) == Action::reverse);
  CHECK(adapt_simplified(TargetAction::target_long, with_position(Direction::long_side)) == Action::hold);
  CHECK(adapt_simplified(TargetAction::hold, with_position(Direction::long_side)) == Action::hold);
}

TEST_CASE("reset is deterministic and starts from the flat state") {
  auto slice = synthetic_slice(300, 5);
  Environment a(EnvConfig{}, slice);
  Environment b(EnvConfig{}, slice);
  const Observation oa = a.reset(9);
  const Observation ob = b.reset(9);
  CHECK(oa == ob);
  CHECK(a.state().equity == 100000.0);
  CHECK(oa.mask == compute_legal_mask(a.state(), EnvConfig{}.risk, ActionMode::extended));
  a.step(1);
  CHECK(a.reset(9) == oa);
}

TEST_CASE("step contract") {
  auto slice = synthetic_slice(200, 6);
  Environment env(EnvConfig{}, slice);
  CHECK_THROWS_AS(env.step(0), ContractError);
  env.reset(1);
  CHECK_THROWS_AS(env.step(10), ContractError);
  CHECK_THROWS_AS(env.step(-1), ContractError);
  std::size_t steps = 0;
  while (!env.done()) {
    env.step(0);
    ++steps;
  }
  CHECK(steps == env.episode_length());
  CHECK(steps == slice->size() - 24);
  CHECK_THROWS_AS(env.step(0), ContractError);
}

TEST_CASE("slice shorter than window + 2 is a data error") {
  auto slice = synthetic_slice(200, 6);
  auto tiny = std::make_shared<MarketSlice>();
  tiny->bars.assign(slice->bars.begin(), slice->bars.begin() + 25);
  tiny->features.assign(slice->features.begin(), slice->features.begin() + 25);
  CHECK_THROWS_AS(Environment(EnvConfig{}, tiny), DataError);
}

TEST_CASE("stored mask equals the pre-step mask and mask_next the post-step mask") {
  Environment env(EnvConfig{}, synthetic_slice(600, 7));
  env.reset(3);
  Rng rng(3);
  while (!env.done()) {
    const LegalMask before = env.mask();
    const auto legal_now = before.legal_actions();
    const StepResult r = env.step(legal_now[uniform_index(rng, legal_now.size())]);
    REQUIRE(r.info.mask == before);
    REQUIRE(r.info.mask_next == env.mask());
    REQUIRE(r.observation.mask == env.mask());
    REQUIRE(r.info.equity == r.info.next_portfolio.cash + r.info.next_portfolio.unrealized_pnl);
  }
}
