#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fxrl/actions.hpp"
#include "fxrl/rng.hpp"

namespace fxrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct DenseLayer {
  Matrix W;  // out x in
  Vector b;  // out

  bool operator==(const DenseLayer& o) const { return W == o.W && b == o.b; }
};

// Same layout as the network; also used for gradients and Adam moments.
using LayerSet = std::vector<DenseLayer>;

std::size_t parameter_count(const LayerSet& layers);
// Flat parameter addressing: per layer, W in column-major order, then b.
double& parameter_at(LayerSet& layers, std::size_t index);
double parameter_at(const LayerSet& layers, std::size_t index);
LayerSet zeros_like(const LayerSet& layers);
double global_norm(const LayerSet& g);

// MLP: ReLU on hidden layers, identity on the output layer.
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t n_actions);

  // Xavier-uniform weights, zero biases.
  void init_xavier(Rng& rng);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t n_actions() const { return n_actions_; }
  std::vector<std::size_t> hidden_dims() const;

  // Rows of X are samples; returns B x n_actions.
  Matrix forward(const Matrix& X) const;
  Vector forward(std::span<const double> s) const;

  // Forward pass that keeps the pre-activations for backprop.
  struct Cache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activation of each layer
  };
  Matrix forward(const Matrix& X, Cache& cache) const;
  // dOut is dLoss/dQ (B x n_actions); returns parameter gradients.
  LayerSet backward(const Cache& cache, const Matrix& dOut) const;

  LayerSet& layers() { return layers_; }
  const LayerSet& layers() const { return layers_; }

  bool operator==(const QNetwork& o) const { return layers_ == o.layers_; }

 private:
  void check_input(std::size_t cols) const;

  std::size_t input_dim_ = 0;
  std::size_t n_actions_ = 0;
  LayerSet layers_;
};

struct AdamConfig {
  double learning_rate = 2.5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  LayerSet m;
  LayerSet v;
  std::int64_t step = 0;
};

OptimizerState make_optimizer_state(const QNetwork& net);
void adam_update(LayerSet& params, OptimizerState& opt, const LayerSet& grads, const AdamConfig& cfg);

// Scales g in place so its global L2 norm is at most max_norm; returns the
// norm before clipping.
double clip_global_norm(LayerSet& g, double max_norm);

double huber(double x, double delta = 1.0);
double huber_grad(double x, double delta = 1.0);

// Mean Huber loss over Q(s_i, a_i) - y_i and its parameter gradient.
struct LossAndGrad {
  double loss = 0.0;
  LayerSet grads;
};
LossAndGrad huber_loss_and_grad(const QNetwork& net, const Matrix& S, const std::vector<int>& actions,
                                const Vector& targets, double delta = 1.0);

struct Transition {
  std::vector<double> s;
  int a = 0;
  double r = 0.0;
  std::vector<double> s_next;
  bool done = false;
  LegalMask mask;
  LegalMask mask_next;
};

struct Batch {
  Matrix s;
  std::vector<int> a;
  Vector r;
  Matrix s_next;
  std::vector<std::uint8_t> done;
  std::vector<LegalMask> mask;
  std::vector<LegalMask> mask_next;
  std::vector<std::size_t> indices;  // buffer slots drawn

  std::size_t size() const { return a.size(); }
};

Batch make_batch(const std::vector<Transition>& transitions);

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  // Uniform with replacement over current contents.
  Batch sample(std::size_t batch_size, Rng& rng) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  // i-th oldest transition.
  const Transition& at(std::size_t i) const;
  std::uint64_t total_pushed() const { return pushed_; }

 private:
  std::size_t capacity_;
  std::vector<Transition> ring_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::uint64_t pushed_ = 0;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.01;
  std::int64_t decay_steps = 30000;

  double value(std::int64_t t) const;
};

// Lowest-id maximiser among legal entries. All-false mask is a ContractError.
int masked_argmax(std::span<const double> q, const LegalMask& mask);

int select_action(std::span<const double> q, const LegalMask& mask, double epsilon, Rng& rng);

// Bootstrap action chosen per sample (-1 for terminal samples); lets callers
// audit target legality.
struct TargetAudit {
  std::vector<int> chosen;
};

Vector dqn_targets(const Batch& batch, const QNetwork& target, double gamma,
                   TargetAudit* audit = nullptr);
Vector ddqn_targets(const Batch& batch, const QNetwork& online, const QNetwork& target,
                    double gamma, TargetAudit* audit = nullptr);

void sync_target(QNetwork& target, const QNetwork& online);

struct TrainStepResult {
  double loss = 0.0;
  double grad_norm = 0.0;  // before clipping
};

// Huber loss, gradient, global-norm clip, Adam. Non-finite loss throws
// TrainingFault before any parameter changes.
TrainStepResult train_step(QNetwork& net, OptimizerState& opt, const Batch& batch,
                           const Vector& targets, const AdamConfig& adam, double grad_clip,
                           double huber_delta = 1.0);

enum class Algorithm { dqn, ddqn };
Algorithm parse_algorithm(const std::string& name);
std::string to_string(Algorithm a);

struct AgentConfig {
  Algorithm algorithm = Algorithm::ddqn;
  std::vector<std::size_t> hidden = {512, 512, 256};
  double gamma = 0.99;
  AdamConfig adam;
  double grad_clip = 10.0;
  double huber_delta = 1.0;
};

class Agent {
 public:
  Agent(const AgentConfig& cfg, std::size_t input_dim, std::size_t n_actions, Rng& init_rng);

  int act(std::span<const double> s, const LegalMask& mask, double epsilon, Rng& rng) const;
  Vector q_values(std::span<const double> s) const { return online_.forward(s); }
  TrainStepResult learn(const Batch& batch, TargetAudit* audit = nullptr);
  void sync_target() { fxrl::sync_target(target_, online_); }

  const AgentConfig& config() const { return cfg_; }
  QNetwork& online() { return online_; }
  const QNetwork& online() const { return online_; }
  QNetwork& target() { return target_; }
  const QNetwork& target() const { return target_; }
  OptimizerState& optimizer() { return opt_; }
  const OptimizerState& optimizer() const { return opt_; }

 private:
  AgentConfig cfg_;
  QNetwork online_;
  QNetwork target_;
  OptimizerState opt_;
};

// Binary checkpoint container.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::int64_t env_step = 0;
  std::int64_t schedule_step = 0;
  QNetwork online;
  QNetwork target;
  OptimizerState optimizer;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fxrl
