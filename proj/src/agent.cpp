#include "fxrl/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fxrl/error.hpp"

namespace fxrl {

std::size_t parameter_count(const LayerSet& layers) {
  std::size_t n = 0;
  for (const DenseLayer& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

double& parameter_at(LayerSet& layers, std::size_t index) {
  for (DenseLayer& l : layers) {
    const auto nw = static_cast<std::size_t>(l.W.size());
    if (index < nw) return l.W.data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(l.b.size());
    if (index < nb) return l.b.data()[index];
    index -= nb;
  }
  throw ContractError("parameter index out of range");
}

double parameter_at(const LayerSet& layers, std::size_t index) {
  return parameter_at(const_cast<LayerSet&>(layers), index);
}

LayerSet zeros_like(const LayerSet& layers) {
  LayerSet out;
  out.reserve(layers.size());
  for (const DenseLayer& l : layers) {
    out.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
  }
  return out;
}

double global_norm(const LayerSet& g) {
  double ss = 0.0;
  for (const DenseLayer& l : g) ss += l.W.squaredNorm() + l.b.squaredNorm();
  return std::sqrt(ss);
}

QNetwork::QNetwork(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                   std::size_t n_actions)
    : input_dim_(input_dim), n_actions_(n_actions) {
  if (input_dim == 0 || n_actions == 0) throw ContractError("network dimensions must be positive");
  std::size_t fan_in = input_dim;
  std::vector<std::size_t> dims = hidden;
  dims.push_back(n_actions);
  for (std::size_t out : dims) {
    if (out == 0) throw ContractError("hidden layer width must be positive");
    layers_.push_back({Matrix::Zero(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(fan_in)),
                       Vector::Zero(static_cast<Eigen::Index>(out))});
    fan_in = out;
  }
}

std::vector<std::size_t> QNetwork::hidden_dims() const {
  std::vector<std::size_t> h;
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) h.push_back(static_cast<std::size_t>(layers_[i].W.rows()));
  return h;
}

void QNetwork::init_xavier(Rng& rng) {
  for (DenseLayer& l : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.W.rows() + l.W.cols()));
    for (Eigen::Index j = 0; j < l.W.cols(); ++j) {
      for (Eigen::Index i = 0; i < l.W.rows(); ++i) {
        l.W(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
      }
    }
    l.b.setZero();
  }
}

void QNetwork::check_input(std::size_t cols) const {
  if (cols != input_dim_) {
    throw ContractError("q-network input has length " + std::to_string(cols) + ", expected " +
                        std::to_string(input_dim_));
  }
}

Matrix QNetwork::forward(const Matrix& X) const {
  check_input(static_cast<std::size_t>(X.cols()));
  Matrix a = X;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Matrix z = a * layers_[i].W.transpose();
    z.rowwise() += layers_[i].b.transpose();
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Vector QNetwork::forward(std::span<const double> s) const {
  check_input(s.size());
  Matrix X = Eigen::Map<const Matrix>(s.data(), 1, static_cast<Eigen::Index>(s.size()));
  return forward(X).row(0).transpose();
}

Matrix QNetwork::forward(const Matrix& X, Cache& cache) const {
  check_input(static_cast<std::size_t>(X.cols()));
  cache.inputs.clear();
  cache.pre.clear();
  Matrix a = X;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.inputs.push_back(a);
    Matrix z = a * layers_[i].W.transpose();
    z.rowwise() += layers_[i].b.transpose();
    cache.pre.push_back(z);
    a = i + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return a;
}

LayerSet QNetwork::backward(const Cache& cache, const Matrix& dOut) const {
  LayerSet g = zeros_like(layers_);
  Matrix dz = dOut;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    g[k].W.noalias() = dz.transpose() * cache.inputs[k];
    g[k].b = dz.colwise().sum().transpose();
    if (k == 0) break;
    Matrix da = dz * layers_[k].W;
    dz = (cache.pre[k - 1].array() > 0.0).select(da, 0.0);
  }
  return g;
}

OptimizerState make_optimizer_state(const QNetwork& net) {
  return OptimizerState{zeros_like(net.layers()), zeros_like(net.layers()), 0};
}

void adam_update(LayerSet& params, OptimizerState& opt, const LayerSet& grads,
                 const AdamConfig& cfg) {
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto update = [&](auto& p, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    p.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].W, opt.m[i].W, opt.v[i].W, grads[i].W);
    update(params[i].b, opt.m[i].b, opt.v[i].b, grads[i].b);
  }
}

double clip_global_norm(LayerSet& g, double max_norm) {
  const double norm = global_norm(g);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (DenseLayer& l : g) {
      l.W *= scale;
      l.b *= scale;
    }
  }
  return norm;
}

double huber(double x, double delta) {
  const double a = std::fabs(x);
  return a <= delta ? 0.5 * x * x : delta * (a - 0.5 * delta);
}

double huber_grad(double x, double delta) { return std::clamp(x, -delta, delta); }

LossAndGrad huber_loss_and_grad(const QNetwork& net, const Matrix& S, const std::vector<int>& actions,
                                const Vector& targets, double delta) {
  const auto B = static_cast<Eigen::Index>(actions.size());
  if (S.rows() != B || targets.size() != B || B == 0) {
    throw ContractError("batch arrays have inconsistent sizes");
  }
  QNetwork::Cache cache;
  const Matrix q = net.forward(S, cache);
  Matrix dq = Matrix::Zero(q.rows(), q.cols());
  LossAndGrad out;
  for (Eigen::Index i = 0; i < B; ++i) {
    const int a = actions[static_cast<std::size_t>(i)];
    if (a < 0 || a >= q.cols()) throw ContractError("batch action id out of range");
    const double err = q(i, a) - targets(i);
    out.loss += huber(err, delta);
    dq(i, a) = huber_grad(err, delta) / static_cast<double>(B);
  }
  out.loss /= static_cast<double>(B);
  out.grads = net.backward(cache, dq);
  return out;
}

Batch make_batch(const std::vector<Transition>& ts) {
  if (ts.empty()) throw ContractError("empty batch");
  const auto B = static_cast<Eigen::Index>(ts.size());
  const auto d = static_cast<Eigen::Index>(ts.front().s.size());
  Batch b;
  b.s.resize(B, d);
  b.s_next.resize(B, d);
  b.r.resize(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    const Transition& t = ts[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(t.s.size()) != d || static_cast<Eigen::Index>(t.s_next.size()) != d) {
      throw ContractError("transitions in a batch have different observation lengths");
    }
    for (Eigen::Index j = 0; j < d; ++j) {
      b.s(i, j) = t.s[static_cast<std::size_t>(j)];
      b.s_next(i, j) = t.s_next[static_cast<std::size_t>(j)];
    }
    b.a.push_back(t.a);
    b.r(i) = t.r;
    b.done.push_back(t.done ? 1 : 0);
    b.mask.push_back(t.mask);
    b.mask_next.push_back(t.mask_next);
    b.indices.push_back(static_cast<std::size_t>(i));
  }
  return b;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ContractError("replay capacity must be positive");
  ring_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Transition t) {
  if (ring_.size() < capacity_) {
    ring_.push_back(std::move(t));
  } else {
    ring_[cursor_] = std::move(t);
  }
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
  ++pushed_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
  if (i >= size_) throw ContractError("replay index out of range");
  const std::size_t oldest = size_ < capacity_ ? 0 : cursor_;
  return ring_[(oldest + i) % capacity_];
}

Batch ReplayBuffer::sample(std::size_t batch_size, Rng& rng) const {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (size_ < batch_size) {
    throw ContractError("replay sample of " + std::to_string(batch_size) + " requested with only " +
                        std::to_string(size_) + " stored transitions");
  }
  const auto B = static_cast<Eigen::Index>(batch_size);
  const auto d = static_cast<Eigen::Index>(ring_.front().s.size());
  Batch b;
  b.s.resize(B, d);
  b.s_next.resize(B, d);
  b.r.resize(B);
  b.a.reserve(batch_size);
  for (Eigen::Index i = 0; i < B; ++i) {
    const std::size_t slot = uniform_index(rng, size_);
    const Transition& t = ring_[slot];
    b.s.row(i) = Eigen::Map<const Eigen::RowVectorXd>(t.s.data(), d);
    b.s_next.row(i) = Eigen::Map<const Eigen::RowVectorXd>(t.s_next.data(), d);
    b.a.push_back(t.a);
    b.r(i) = t.r;
    b.done.push_back(t.done ? 1 : 0);
    b.mask.push_back(t.mask);
    b.mask_next.push_back(t.mask_next);
    b.indices.push_back(slot);
  }
  return b;
}

double EpsilonSchedule::value(std::int64_t t) const {
  if (decay_steps <= 0 || t >= decay_steps) return end;
  const double frac = std::min(1.0, static_cast<double>(std::max<std::int64_t>(t, 0)) /
                                        static_cast<double>(decay_steps));
  return start + (end - start) * frac;
}

int masked_argmax(std::span<const double> q, const LegalMask& mask) {
  if (q.size() != mask.size()) throw ContractError("q-values and mask differ in length");
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!mask[a]) continue;
    if (best < 0 || q[a] > q[static_cast<std::size_t>(best)]) best = static_cast<int>(a);
  }
  if (best < 0) throw ContractError("all-false legality mask");
  return best;
}

int select_action(std::span<const double> q, const LegalMask& mask, double epsilon, Rng& rng) {
  if (!mask.any()) throw ContractError("all-false legality mask");
  if (q.size() != mask.size()) throw ContractError("q-values and mask differ in length");
  int a;
  if (uniform01(rng) < epsilon) {
    const std::vector<int> legal = mask.legal_actions();
    a = legal[uniform_index(rng, legal.size())];
  } else {
    a = masked_argmax(q, mask);
  }
  if (!mask[static_cast<std::size_t>(a)]) throw ContractError("selected an illegal action");
  return a;
}

namespace {

// Copies row i so argmax can read it contiguously.
std::vector<double> row_of(const Matrix& m, Eigen::Index i) {
  std::vector<double> v(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) v[static_cast<std::size_t>(j)] = m(i, j);
  return v;
}

void check_next_masks(const Batch& batch, std::size_t n_actions) {
  for (const LegalMask& m : batch.mask_next) {
    if (m.size() != n_actions) throw ContractError("next-state mask width differs from n_actions");
  }
}

}  // namespace

Vector dqn_targets(const Batch& batch, const QNetwork& target, double gamma, TargetAudit* audit) {
  check_next_masks(batch, target.n_actions());
  const Matrix qn = target.forward(batch.s_next);
  Vector y(static_cast<Eigen::Index>(batch.size()));
  if (audit) audit->chosen.assign(batch.size(), -1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (batch.done[i]) {
      y(ii) = batch.r(ii);
      continue;
    }
    const std::vector<double> row = row_of(qn, ii);
    const int a = masked_argmax(row, batch.mask_next[i]);
    if (!batch.mask_next[i][static_cast<std::size_t>(a)]) throw ContractError("illegal bootstrap action");
    if (audit) audit->chosen[i] = a;
    y(ii) = batch.r(ii) + gamma * row[static_cast<std::size_t>(a)];
  }
  return y;
}

Vector ddqn_targets(const Batch& batch, const QNetwork& online, const QNetwork& target,
                    double gamma, TargetAudit* audit) {
  check_next_masks(batch, target.n_actions());
  const Matrix qo = online.forward(batch.s_next);
  const Matrix qt = target.forward(batch.s_next);
  Vector y(static_cast<Eigen::Index>(batch.size()));
  if (audit) audit->chosen.assign(batch.size(), -1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (batch.done[i]) {
      y(ii) = batch.r(ii);
      continue;
    }
    const int a = masked_argmax(row_of(qo, ii), batch.mask_next[i]);
    if (!batch.mask_next[i][static_cast<std::size_t>(a)]) throw ContractError("illegal bootstrap action");
    if (audit) audit->chosen[i] = a;
    y(ii) = batch.r(ii) + gamma * qt(ii, a);
  }
  return y;
}

void sync_target(QNetwork& target, const QNetwork& online) {
  if (target.layers().size() != online.layers().size()) {
    throw ContractError("target and online networks differ in depth");
  }
  for (std::size_t i = 0; i < online.layers().size(); ++i) {
    if (target.layers()[i].W.rows() != online.layers()[i].W.rows() ||
        target.layers()[i].W.cols() != online.layers()[i].W.cols()) {
      throw ContractError("target and online networks differ in shape");
    }
  }
  target = online;
}

TrainStepResult train_step(QNetwork& net, OptimizerState& opt, const Batch& batch,
                           const Vector& targets, const AdamConfig& adam, double grad_clip,
                           double huber_delta) {
  LossAndGrad lg = huber_loss_and_grad(net, batch.s, batch.a, targets, huber_delta);
  if (!std::isfinite(lg.loss)) {
    throw TrainingFault("non-finite loss at optimizer step " + std::to_string(opt.step + 1));
  }
  TrainStepResult res;
  res.loss = lg.loss;
  res.grad_norm = clip_global_norm(lg.grads, grad_clip);
  if (!std::isfinite(res.grad_norm)) {
    throw TrainingFault("non-finite gradient norm at optimizer step " + std::to_string(opt.step + 1));
  }
  adam_update(net.layers(), opt, lg.grads, adam);
  return res;
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "dqn") return Algorithm::dqn;
  if (name == "doubledqn" || name == "ddqn") return Algorithm::ddqn;
  throw ConfigError("unknown agent '" + name + "' (expected dqn or doubledqn)");
}

std::string to_string(Algorithm a) { return a == Algorithm::dqn ? "dqn" : "doubledqn"; }

Agent::Agent(const AgentConfig& cfg, std::size_t input_dim, std::size_t n_actions, Rng& init_rng)
    : cfg_(cfg), online_(input_dim, cfg.hidden, n_actions) {
  online_.init_xavier(init_rng);
  target_ = online_;
  opt_ = make_optimizer_state(online_);
}

int Agent::act(std::span<const double> s, const LegalMask& mask, double epsilon, Rng& rng) const {
  const Vector q = online_.forward(s);
  return select_action(std::span<const double>(q.data(), static_cast<std::size_t>(q.size())), mask,
                       epsilon, rng);
}

TrainStepResult Agent::learn(const Batch& batch, TargetAudit* audit) {
  const Vector y = cfg_.algorithm == Algorithm::dqn
                       ? dqn_targets(batch, target_, cfg_.gamma, audit)
                       : ddqn_targets(batch, online_, target_, cfg_.gamma, audit);
  return train_step(online_, opt_, batch, y, cfg_.adam, cfg_.grad_clip, cfg_.huber_delta);
}

// ---------------------------------------------------------------------------
// Checkpoint I/O: little-endian raw fields behind an 8-byte magic.

namespace {

constexpr char kMagic[8] = {'F', 'X', 'R', 'L', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const double* p, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
  }
  void layers(const LayerSet& ls) {
    pod<std::uint64_t>(ls.size());
    for (const DenseLayer& l : ls) {
      pod<std::uint64_t>(static_cast<std::uint64_t>(l.W.rows()));
      pod<std::uint64_t>(static_cast<std::uint64_t>(l.W.cols()));
      doubles(l.W.data(), static_cast<std::size_t>(l.W.size()));
      doubles(l.b.data(), static_cast<std::size_t>(l.b.size()));
    }
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string name) : in_(in), name_(std::move(name)) {}
  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ull << 30)) fail("string field too large");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }
  void doubles(double* p, std::size_t n) {
    in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n * sizeof(double)));
    check();
  }
  LayerSet layers() {
    const auto n = pod<std::uint64_t>();
    if (n > 64) fail("implausible layer count");
    LayerSet ls;
    for (std::uint64_t i = 0; i < n; ++i) {
      const auto rows = pod<std::uint64_t>();
      const auto cols = pod<std::uint64_t>();
      if (rows == 0 || cols == 0 || rows * cols > (1ull << 28)) fail("implausible layer shape");
      DenseLayer l{Matrix(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)),
                   Vector(static_cast<Eigen::Index>(rows))};
      doubles(l.W.data(), static_cast<std::size_t>(l.W.size()));
      doubles(l.b.data(), static_cast<std::size_t>(l.b.size()));
      ls.push_back(std::move(l));
    }
    return ls;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("checkpoint " + name_ + ": " + what);
  }

 private:
  void check() const {
    if (!in_) fail("truncated file");
  }
  std::istream& in_;
  std::string name_;
};

QNetwork network_from_layers(LayerSet layers) {
  if (layers.empty()) throw DataError("checkpoint holds an empty network");
  std::vector<std::size_t> hidden;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (layers[i + 1].W.cols() != layers[i].W.rows()) throw DataError("checkpoint layer shapes do not chain");
    hidden.push_back(static_cast<std::size_t>(layers[i].W.rows()));
  }
  QNetwork net(static_cast<std::size_t>(layers.front().W.cols()), hidden,
               static_cast<std::size_t>(layers.back().W.rows()));
  net.layers() = std::move(layers);
  return net;
}

bool same_shapes(const LayerSet& a, const LayerSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].W.rows() != b[i].W.rows() || a[i].W.cols() != b[i].W.cols()) return false;
  }
  return true;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  Writer w(out);
  out.write(kMagic, sizeof(kMagic));
  w.pod<std::uint32_t>(kCheckpointVersion);
  w.pod<std::uint64_t>(c.config_hash);
  w.str(c.config_text);
  w.pod<std::int64_t>(c.env_step);
  w.pod<std::int64_t>(c.schedule_step);
  w.layers(c.online.layers());
  w.layers(c.target.layers());
  w.pod<std::int64_t>(c.optimizer.step);
  w.layers(c.optimizer.m);
  w.layers(c.optimizer.v);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("bad magic");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  Checkpoint c;
  c.config_hash = r.pod<std::uint64_t>();
  c.config_text = r.str();
  c.env_step = r.pod<std::int64_t>();
  c.schedule_step = r.pod<std::int64_t>();
  c.online = network_from_layers(r.layers());
  c.target = network_from_layers(r.layers());
  c.optimizer.step = r.pod<std::int64_t>();
  c.optimizer.m = r.layers();
  c.optimizer.v = r.layers();
  if (!same_shapes(c.online.layers(), c.target.layers()) ||
      !same_shapes(c.online.layers(), c.optimizer.m) ||
      !same_shapes(c.online.layers(), c.optimizer.v)) {
    r.fail("network, target and optimizer shapes disagree");
  }
  return c;
}

}  // namespace fxrl
