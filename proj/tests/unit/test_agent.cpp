#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fxrl/agent.hpp"
#include "fxrl/error.hpp"

using namespace fxrl;

namespace {

LegalMask mask_of(std::initializer_list<int> bits) {
  LegalMask m(bits.size());
  std::size_t i = 0;
  for (int b : bits) m.set(i++, b != 0);
  return m;
}

QNetwork seeded(std::size_t in, std::vector<std::size_t> hidden, std::size_t out, std::uint64_t seed) {
  QNetwork n(in, hidden, out);
  Rng rng(seed);
  n.init_xavier(rng);
  return n;
}

// Random batch with random legal next masks, some terminal rows.
Batch random_batch(std::size_t B, std::size_t d, std::size_t n_a, Rng& rng) {
  std::vector<Transition> ts;
  for (std::size_t i = 0; i < B; ++i) {
    Transition t;
    for (std::size_t j = 0; j < d; ++j) {
      t.s.push_back(standard_normal(rng));
      t.s_next.push_back(standard_normal(rng));
    }
    t.a = static_cast<int>(uniform_index(rng, n_a));
    t.r = standard_normal(rng);
    t.done = uniform01(rng) < 0.1;
    t.mask = LegalMask(n_a, true);
    t.mask_next = LegalMask(n_a);
    t.mask_next.set(uniform_index(rng, n_a), true);
    for (std::size_t k = 0; k < n_a; ++k) {
      if (uniform01(rng) < 0.4) t.mask_next.set(k, true);
    }
    ts.push_back(std::move(t));
  }
  return make_batch(ts);
}

}  // namespace

TEST_CASE("zero network outputs zeros") {
  QNetwork n(5, {4, 3}, 2);
  const Vector q = n.forward(std::vector<double>{1, 2, 3, 4, 5});
  CHECK(q.size() == 2);
  CHECK(q.isZero(0.0));
}

TEST_CASE("hand-evaluated two-layer toy") {
  QNetwork n(2, {1}, 2);
  auto& L = n.layers();
  L[0].W << 1.0, -1.0;
  L[0].b << 0.5;
  L[1].W << 2.0, -3.0;
  L[1].b << 0.25, 1.0;
  // h = relu(x0 - x1 + 0.5); q = [2h + 0.25, -3h + 1]
  const Vector q = n.forward(std::vector<double>{3.0, 1.0});
  CHECK(q(0) == 2.0 * 2.5 + 0.25);
  CHECK(q(1) == -3.0 * 2.5 + 1.0);
  const Vector q2 = n.forward(std::vector<double>{0.0, 2.0});  // relu clamps
  CHECK(q2(0) == 0.25);
  CHECK(q2(1) == 1.0);
}

TEST_CASE("batch evaluation equals per-sample evaluation") {
  const QNetwork n = seeded(476, {512, 512, 256}, 10, 1);
  Rng rng(2);
  Matrix X(32, 476);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = standard_normal(rng);
  const Matrix Q = n.forward(X);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    std::vector<double> row(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) row[j] = X(i, j);
    const Vector qi = n.forward(row);
    for (Eigen::Index k = 0; k < Q.cols(); ++k) CHECK(qi(k) == doctest::Approx(Q(i, k)).epsilon(1e-12));  // GEMM vs GEMV kernels
  }
}

TEST_CASE("wrong input length is a contract error") {
  const QNetwork n = seeded(476, {8}, 10, 1);
  CHECK_THROWS_AS(n.forward(std::vector<double>(469, 0.0)), ContractError);
}

TEST_CASE("masked action selection") {
  Rng rng(3);
  const std::vector<double> q = {5, 1, 9};
  CHECK(select_action(q, mask_of({1, 1, 0}), 0.0, rng) == 0);
  CHECK(masked_argmax(q, mask_of({1, 1, 0})) == 0);
  CHECK(masked_argmax(std::vector<double>{2, 2, 1}, mask_of({1, 1, 1})) == 0);
  for (int i = 0; i < 100; ++i) CHECK(select_action(q, mask_of({1, 0, 0}), 1.0, rng) == 0);
  CHECK_THROWS_AS(masked_argmax(q, mask_of({0, 0, 0})), ContractError);
}

TEST_CASE("uniform exploration over ten legal actions") {
  Rng rng(4);
  const std::vector<double> q(10, 0.0);
  const LegalMask all(10, true);
  std::vector<int> hist(10, 0);
  const int N = 100000;
  for (int i = 0; i < N; ++i) ++hist[select_action(q, all, 1.0, rng)];
  const double sigma = std::sqrt(N * 0.1 * 0.9);
  for (int h : hist) CHECK(std::fabs(h - N * 0.1) < 5 * sigma);
}

TEST_CASE("dqn targets") {
  QNetwork target(1, {}, 3);
  target.layers()[0].b << 1.0, 2.0, 5.0;
  Transition t{{0.0}, 0, 0.0, {0.0}, false, LegalMask(3, true), mask_of({1, 1, 0})};
  Transition d{{0.0}, 0, 0.3, {0.0}, true, LegalMask(3, true), mask_of({1, 1, 1})};
  const Batch b = make_batch({t, d});
  TargetAudit audit;
  const Vector y = dqn_targets(b, target, 0.99, &audit);
  CHECK(y(0) == doctest::Approx(1.98).epsilon(1e-15));
  CHECK(y(1) == 0.3);
  CHECK(audit.chosen[0] == 1);
  CHECK(audit.chosen[1] == -1);

  Rng rng(5);
  const Batch rb = random_batch(64, 6, 4, rng);
  const QNetwork net = seeded(6, {8}, 4, 6);
  const Vector y0 = dqn_targets(rb, net, 0.0);
  for (Eigen::Index i = 0; i < y0.size(); ++i) CHECK(y0(i) == rb.r(i));
}

TEST_CASE("ddqn targets") {
  QNetwork online(1, {}, 3);
  online.layers()[0].b << 0.0, 3.0, 9.0;  // argmax over legal {0,1} is 1
  QNetwork target(1, {}, 3);
  target.layers()[0].b << 7.0, 0.5, 8.0;
  Transition t{{0.0}, 0, 0.1, {0.0}, false, LegalMask(3, true), mask_of({1, 1, 0})};
  const Batch b = make_batch({t});
  CHECK(ddqn_targets(b, online, target, 0.99)(0) == doctest::Approx(0.595).epsilon(1e-15));

  Transition d = t;
  d.done = true;
  CHECK(ddqn_targets(make_batch({d}), online, target, 0.99)(0) == 0.1);

  Rng rng(7);
  const QNetwork net = seeded(6, {8, 8}, 4, 8);
  for (int k = 0; k < 10; ++k) {
    const Batch rb = random_batch(32, 6, 4, rng);
    const Vector a = ddqn_targets(rb, net, net, 0.99);
    const Vector c = dqn_targets(rb, net, 0.99);
    CHECK(a == c);
  }
}

TEST_CASE("loss at the fixed point is zero and leaves parameters unchanged") {
  QNetwork net = seeded(4, {6}, 3, 9);
  Rng rng(10);
  const Batch b = random_batch(16, 4, 3, rng);
  const Matrix q = net.forward(b.s);
  Vector y(16);
  for (Eigen::Index i = 0; i < 16; ++i) y(i) = q(i, b.a[static_cast<std::size_t>(i)]);
  const LossAndGrad lg = huber_loss_and_grad(net, b.s, b.a, y);
  CHECK(lg.loss == 0.0);
  CHECK(global_norm(lg.grads) == 0.0);
  const QNetwork before = net;
  OptimizerState opt = make_optimizer_state(net);
  train_step(net, opt, b, y, AdamConfig{}, 10.0);
  CHECK(net == before);
}

TEST_CASE("one Adam step on a single-parameter quadratic") {
  LayerSet p(1);
  p[0].W = Matrix::Constant(1, 1, 1.0);
  p[0].b = Vector::Zero(0);
  OptimizerState opt{zeros_like(p), zeros_like(p), 0};
  LayerSet g(1);
  g[0].W = Matrix::Constant(1, 1, 2.0 * p[0].W(0, 0));  // d/dθ θ²
  g[0].b = Vector::Zero(0);
  const AdamConfig cfg;
  adam_update(p, opt, g, cfg);
  const double m = (1 - cfg.beta1) * 2.0, v = (1 - cfg.beta2) * 4.0;
  const double mhat = m / (1 - cfg.beta1), vhat = v / (1 - cfg.beta2);
  const double expected = 1.0 - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
  CHECK(p[0].W(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(opt.step == 1);
}

TEST_CASE("global norm clipping") {
  LayerSet g(1);
  g[0].W = Matrix::Constant(1, 1, 60.0);
  g[0].b = Vector::Constant(1, 80.0);
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(100.0));
  CHECK(global_norm(g) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(g[0].W(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
  LayerSet small(1);
  small[0].W = Matrix::Constant(1, 1, 3.0);
  small[0].b = Vector::Constant(1, 4.0);
  clip_global_norm(small, 10.0);
  CHECK(small[0].W(0, 0) == 3.0);
}

TEST_CASE("huber loss") {
  CHECK(huber(0.5) == 0.125);
  CHECK(huber(3.0) == 2.5);
  CHECK(huber_grad(0.5) == 0.5);
  CHECK(huber_grad(-3.0) == -1.0);
}

TEST_CASE("non-finite targets raise a training fault before any update") {
  QNetwork net = seeded(4, {6}, 3, 11);
  Rng rng(12);
  const Batch b = random_batch(8, 4, 3, rng);
  Vector y = Vector::Zero(8);
  y(3) = std::numeric_limits<double>::quiet_NaN();
  const QNetwork before = net;
  OptimizerState opt = make_optimizer_state(net);
  CHECK_THROWS_AS(train_step(net, opt, b, y, AdamConfig{}, 10.0), TrainingFault);
  CHECK(net == before);
  CHECK(opt.step == 0);
}

TEST_CASE("target sync copies and stays decoupled") {
  QNetwork online = seeded(4, {6}, 3, 13);
  QNetwork target = seeded(4, {6}, 3, 14);
  sync_target(target, online);
  CHECK(target == online);
  sync_target(target, online);
  CHECK(target == online);
  const QNetwork snap = target;
  online.layers()[0].W(0, 0) += 1.0;
  CHECK(target == snap);
  CHECK_FALSE(target == online);
  QNetwork other = seeded(5, {6}, 3, 1);
  CHECK_THROWS_AS(sync_target(other, online), ContractError);
}

TEST_CASE("replay buffer is FIFO at capacity") {
  ReplayBuffer buf(40000);
  for (int i = 0; i < 40001; ++i) {
    Transition t;
    t.s = {static_cast<double>(i)};
    t.s_next = {0.0};
    t.a = 0;
    t.mask = LegalMask(1, true);
    t.mask_next = LegalMask(1, true);
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 40000);
  CHECK(buf.at(0).s[0] == 1.0);
  CHECK(buf.at(39999).s[0] == 40000.0);
  CHECK(buf.total_pushed() == 40001);
}

TEST_CASE("replay sampling is reproducible and uniform") {
  ReplayBuffer buf(50);
  for (int i = 0; i < 50; ++i) {
    Transition t;
    t.s = {static_cast<double>(i)};
    t.s_next = {0.0};
    t.mask = LegalMask(1, true);
    t.mask_next = LegalMask(1, true);
    buf.push(std::move(t));
  }
  Rng a(15), b(15);
  CHECK(buf.sample(32, a).indices == buf.sample(32, b).indices);
  CHECK_THROWS_AS(ReplayBuffer(10).sample(1, a), ContractError);

  std::vector<long> hist(50, 0);
  const long draws = 1000000;
  Rng rng(16);
  for (long k = 0; k < draws / 50; ++k) {
    for (std::size_t i : buf.sample(50, rng).indices) ++hist[i];
  }
  const double p = 1.0 / 50, sigma = std::sqrt(draws * p * (1 - p));
  for (long h : hist) CHECK(std::fabs(h - draws * p) < 5 * sigma);
}

TEST_CASE("epsilon schedule") {
  const EpsilonSchedule e;
  CHECK(e.value(0) == 1.0);
  CHECK(e.value(15000) == doctest::Approx(0.505));
  CHECK(e.value(30000) == 0.01);
  CHECK(e.value(1000000) == 0.01);
}

TEST_CASE("analytic gradients match central differences") {
  QNetwork net = seeded(6, {4, 4, 3}, 3, 17);
  for (auto& l : net.layers()) l.b.setConstant(0.05);
  Rng rng(18);
  const Batch b = random_batch(5, 6, 3, rng);
  Vector y(5);
  for (Eigen::Index i = 0; i < 5; ++i) y(i) = 3.0 * standard_normal(rng);
  const LossAndGrad lg = huber_loss_and_grad(net, b.s, b.a, y);
  const std::size_t n = parameter_count(net.layers());
  int checked = 0;
  for (int probe = 0; probe < 100; ++probe) {
    const std::size_t k = uniform_index(rng, n);
    const double h = 1e-6;
    const double orig = parameter_at(net.layers(), k);
    parameter_at(net.layers(), k) = orig + h;
    const double lp = huber_loss_and_grad(net, b.s, b.a, y).loss;
    parameter_at(net.layers(), k) = orig - h;
    const double lm = huber_loss_and_grad(net, b.s, b.a, y).loss;
    parameter_at(net.layers(), k) = orig;
    const double fd = (lp - lm) / (2 * h);
    const double an = parameter_at(lg.grads, k);
    const double denom = std::max({std::fabs(fd), std::fabs(an), 1e-8});
    if (std::fabs(fd) < 1e-9 && std::fabs(an) < 1e-9) continue;
    ++checked;
    CHECK(std::fabs(fd - an) / denom < 1e-4);
  }
  CHECK(checked > 50);
}

TEST_CASE("checkpoint round trip and corruption") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "fxrl_ckpt_test";
  fs::create_directories(dir);
  Checkpoint c;
  c.config_hash = 0x1234;
  c.config_text = "a: 1\n";
  c.env_step = 7;
  c.schedule_step = 7;
  c.online = seeded(5, {4}, 3, 19);
  c.target = seeded(5, {4}, 3, 20);
  c.optimizer = make_optimizer_state(c.online);
  c.optimizer.step = 3;
  save_checkpoint(dir / "a.ckpt", c);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.config_hash == c.config_hash);
  CHECK(back.config_text == c.config_text);
  CHECK(back.env_step == 7);
  CHECK(back.online == c.online);
  CHECK(back.target == c.target);
  CHECK(back.optimizer.step == 3);

  {
    std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
    bad << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.ckpt"), DataError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), DataError);
  fs::remove_all(dir);
}
