#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "fxrl/error.hpp"
#include "fxrl/runner.hpp"
#include "fxrl/verify.hpp"

namespace py = pybind11;
using namespace fxrl;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::list mask_list(const LegalMask& m) {
  py::list out;
  for (std::size_t i = 0; i < m.size(); ++i) out.append(m[i]);
  return out;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::dict d;
  d["cumulative_return"] = m.cumulative_return;
  d["annualized_return"] = m.annualized_return;
  d["annualized_vol"] = m.annualized_vol;
  d["sharpe"] = m.sharpe;
  d["sortino"] = m.sortino;
  d["max_drawdown"] = m.max_drawdown;
  d["win_rate"] = m.win_rate;
  d["turnover"] = m.turnover;
  d["trade_count"] = m.trade_count;
  d["liquidation_count"] = m.liquidation_count;
  d["avg_pyramid_depth"] = m.avg_pyramid_depth;
  d["avg_martingale_depth"] = m.avg_martingale_depth;
  return d;
}

py::dict rollout_dict(const RolloutResult& r) {
  py::dict d;
  d["metrics"] = metrics_dict(r.metrics);
  d["equity"] = to_array(r.curve.equity);
  d["violations"] = r.violations;
  d["trades"] = r.trades.size();
  d["initial_equity"] = r.initial_equity;
  d["final_equity"] = r.final_equity;
  d["reconciliation_gap"] = reconciliation_gap(r);
  return d;
}

py::dict report_dict(const ConformanceReport& r) {
  py::dict d;
  for (const auto& t : r.tests) d[py::str(t.name)] = py::make_tuple(t.pass, t.evidence);
  return d;
}

ResolvedConfig resolve(const std::vector<std::filesystem::path>& files, const std::vector<std::string>& assignments) {
  if (files.empty()) return resolve_config("", {}, assignments);
  return resolve_config_files(files.front(), {files.begin() + 1, files.end()}, assignments);
}

// Environment owning its data slice, built from a config.
class PyEnv {
 public:
  PyEnv(const std::vector<std::filesystem::path>& files, const std::vector<std::string>& assignments, bool heldout) {
    const RunConfig rc = to_runtime(resolve(files, assignments));
    PreparedData d = build_dataset(rc);
    auto slice =
        std::make_shared<const MarketSlice>(heldout ? std::move(d.split.heldout) : std::move(d.split.train));
    env_ = std::make_unique<Environment>(rc.env, std::move(slice));
  }

  py::tuple reset(std::uint64_t seed) {
    const Observation o = env_->reset(seed);
    return py::make_tuple(to_array(o.flat), mask_list(o.mask));
  }

  py::tuple step(int action) {
    StepResult r = env_->step(action);
    py::dict info;
    info["executed_action"] = static_cast<int>(r.info.executed_action);
    info["violation"] = r.info.violation;
    info["liquidation_event"] = r.info.liquidation_event;
    info["equity"] = r.info.equity;
    info["mask"] = mask_list(r.info.mask);
    info["mask_next"] = mask_list(r.info.mask_next);
    py::dict comps;
    for (std::size_t i = 0; i < kComponentCount; ++i) {
      comps[py::str(component_keys()[i])] = r.info.reward_trace.components[i].weighted;
    }
    info["reward_components"] = comps;
    return py::make_tuple(to_array(r.observation.flat), r.reward, r.done, info);
  }

  std::size_t flat_dim() const { return env_->flat_dim(); }
  std::size_t n_actions() const { return env_->n_actions(); }
  std::size_t episode_length() const { return env_->episode_length(); }
  py::list mask() const { return mask_list(env_->mask()); }

 private:
  std::unique_ptr<Environment> env_;
};

}  // namespace

PYBIND11_MODULE(_fxrl, m) {
  m.doc() = "FX trading environment, DQN/DDQN agent and evaluation";

  auto base = py::register_exception<Error>(m, "FxrlError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<TrainingFault>(m, "TrainingFault", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.def("flat_dimension", &flat_dimension, py::arg("window"), py::arg("d_feat"), py::arg("n_actions"));

  m.def(
      "resolve_config",
      [](const std::vector<std::filesystem::path>& files, const std::vector<std::string>& overrides) {
        const ResolvedConfig c = resolve(files, overrides);
        to_runtime(c);  // range checks
        py::dict d;
        d["hash"] = hash_hex(c.hash());
        d["yaml"] = c.to_yaml();
        return d;
      },
      py::arg("files"), py::arg("overrides") = std::vector<std::string>{},
      "Resolve base + overlay files + key=value overrides; returns the hash and YAML snapshot.");

  m.def(
      "validate_configs",
      [](const std::filesystem::path& root) {
        py::list out;
        for (const auto& e : validate_corpus(root)) out.append(py::make_tuple(e.file.string(), e.ok, e.error));
        return out;
      },
      py::arg("root"));

  m.def(
      "generate_synthetic",
      [](std::size_t n, std::uint64_t seed, const std::string& regime) {
        SyntheticSpec spec;
        spec.regime = parse_regime(regime);
        const auto bars = generate_synthetic(spec, n, seed);
        std::vector<double> o, h, l, c;
        std::vector<std::int64_t> ts;
        for (const Bar& b : bars) {
          ts.push_back(b.timestamp.seconds);
          o.push_back(b.open);
          h.push_back(b.high);
          l.push_back(b.low);
          c.push_back(b.close);
        }
        py::dict d;
        d["timestamp"] = py::array_t<std::int64_t>(static_cast<py::ssize_t>(ts.size()), ts.data());
        d["open"] = to_array(o);
        d["high"] = to_array(h);
        d["low"] = to_array(l);
        d["close"] = to_array(c);
        return d;
      },
      py::arg("n"), py::arg("seed"), py::arg("regime") = "trend");

  m.def(
      "compute_metrics",
      [](const std::vector<double>& equity) {
        EquityCurve c;
        c.equity = equity;
        for (std::size_t i = 0; i < equity.size(); ++i) c.timestamps.push_back(UtcTime{static_cast<std::int64_t>(i) * 3600});
        return metrics_dict(compute_metrics(c, {}, std::vector<StepActivity>(equity.empty() ? 0 : equity.size() - 1)));
      },
      py::arg("equity"));

  m.def(
      "run_training",
      [](const std::vector<std::filesystem::path>& files, const std::vector<std::string>& overrides,
         const std::filesystem::path& out_root, const std::string& label) {
        RunOptions opt;
        opt.out_root = out_root;
        opt.label = label;
        RunArtifacts a;
        {
          py::gil_scoped_release release;
          a = run_training(resolve(files, overrides), opt);
        }
        py::dict d;
        d["dir"] = a.dir.string();
        d["checkpoint"] = a.checkpoint.string();
        d["step_log"] = a.step_log.string();
        d["steps"] = a.steps;
        d["episodes"] = a.episodes;
        d["learn_steps"] = a.cadence.learn_steps;
        d["config_hash"] = hash_hex(a.config_hash);
        d["final_equity"] = a.final_equity;
        d["final_violations"] = a.final_violations;
        d["metrics"] = metrics_dict(a.final_metrics);
        return d;
      },
      py::arg("files"), py::arg("overrides") = std::vector<std::string>{}, py::arg("out_root") = "runs",
      py::arg("label") = "");

  m.def(
      "run_benchmark",
      [](const std::string& strategy, const std::vector<std::filesystem::path>& files,
         const std::vector<std::string>& overrides, bool heldout) {
        const RunConfig rc = to_runtime(resolve(files, overrides));
        PreparedData data = build_dataset(rc);
        auto slice = std::make_shared<const MarketSlice>(heldout ? std::move(data.split.heldout)
                                                                 : std::move(data.split.train));
        auto policy = make_benchmark_policy(strategy, rc.benchmark, derive_seed(rc.seed, Stream::exploration));
        return rollout_dict(rollout(*policy, rc.env, slice, derive_seed(rc.seed, Stream::env)));
      },
      py::arg("strategy"), py::arg("files") = std::vector<std::filesystem::path>{},
      py::arg("overrides") = std::vector<std::string>{}, py::arg("heldout") = false);

  m.def(
      "backtest",
      [](const std::filesystem::path& ckpt, bool heldout) { return rollout_dict(backtest_checkpoint(ckpt, heldout)); },
      py::arg("checkpoint"), py::arg("heldout") = false);

  m.def(
      "run_conformance",
      [](std::uint64_t seed) {
        VerifyOptions o;
        o.seed = seed;
        return py::make_tuple(report_dict(run_conformance(o)), report_dict(run_sensitivity(o)));
      },
      py::arg("seed") = VerifyOptions{}.seed,
      "Returns (conformance, sensitivity) as {name: (pass, evidence)}.");

  py::class_<PyEnv>(m, "Environment")
      .def(py::init<const std::vector<std::filesystem::path>&, const std::vector<std::string>&, bool>(),
           py::arg("files") = std::vector<std::filesystem::path>{}, py::arg("overrides") = std::vector<std::string>{},
           py::arg("heldout") = false)
      .def("reset", &PyEnv::reset, py::arg("seed") = 0)
      .def("step", &PyEnv::step, py::arg("action"))
      .def("mask", &PyEnv::mask)
      .def_property_readonly("flat_dim", &PyEnv::flat_dim)
      .def_property_readonly("n_actions", &PyEnv::n_actions)
      .def_property_readonly("episode_length", &PyEnv::episode_length);
}
