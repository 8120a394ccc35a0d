#include "fxrl/runner.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "fxrl/error.hpp"

namespace fxrl {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::vector<Bar> load_bars(const RunConfig& rc) {
  if (rc.data.source == "csv") {
    return fill_missing(dedup_last(load_ohlcv(rc.data.path, rc.data.pair)));
  }
  return generate_synthetic(rc.data.synthetic, rc.data.bars, derive_seed(rc.seed, Stream::data_gen));
}

PreparedData build_dataset(const RunConfig& rc) {
  return prepare_dataset(load_bars(rc), rc.data.train_fraction, rc.data.features);
}

fs::path unique_run_dir(const fs::path& root, const std::string& label) {
  fs::path dir = root / label;
  for (int n = 1; fs::exists(dir); ++n) dir = root / (label + "_" + std::to_string(n));
  return dir;
}

CadenceCounts expected_cadence(const TrainingConfig& c) {
  CadenceCounts n;
  const std::int64_t T = c.total_timesteps;
  // After the push at step t the buffer holds min(t + 1, capacity) items.
  const std::int64_t first_learn = std::max<std::int64_t>(c.learn_start, static_cast<std::int64_t>(c.batch_size) - 1);
  auto multiples_in = [](std::int64_t lo, std::int64_t hi, std::int64_t m) -> std::int64_t {
    if (hi <= lo) return 0;
    const std::int64_t first = (lo + m - 1) / m * m;
    return first >= hi ? 0 : (hi - 1 - first) / m + 1;
  };
  n.learn_steps = multiples_in(first_learn, T, c.learn_frequency);
  n.target_syncs = c.target_update_in_learn_steps ? n.learn_steps / c.target_update_interval
                                                  : multiples_in(0, T, c.target_update_interval);
  n.evals = c.eval_interval > 0 ? multiples_in(0, T, c.eval_interval) : 0;
  return n;
}

namespace {

std::string mask_string(const LegalMask& m) {
  std::string s;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] ? '1' : '0';
  return s;
}

Json portfolio_json(const PortfolioState& s) {
  Json j;
  j["cash"] = s.cash;
  j["equity"] = s.equity;
  j["realized_pnl"] = s.realized_pnl;
  j["unrealized_pnl"] = s.unrealized_pnl;
  j["used_margin"] = s.used_margin;
  j["free_margin"] = s.free_margin;
  j["margin_utilization"] = s.margin_utilization;
  j["direction"] = static_cast<int>(s.position.direction);
  j["units"] = s.position.units;
  j["lots"] = s.position.lots;
  j["avg_entry_price"] = s.position.avg_entry_price;
  j["pyramid_depth"] = s.position.pyramid_depth;
  j["martingale_depth"] = s.position.martingale_depth;
  j["peak_equity"] = s.peak_equity;
  j["drawdown"] = s.current_drawdown;
  j["liquidated"] = s.liquidated;
  j["mark_price"] = s.mark_price;
  return j;
}

Json cost_json(const CostTrace& c) {
  return Json{{"spread_cost", c.spread_cost},
              {"slippage_cost", c.slippage_cost},
              {"commission", c.commission},
              {"rollover", c.rollover}};
}

Json reward_trace_json(std::int64_t t, const RewardTrace& tr) {
  Json comps = Json::object();
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const ComponentRecord& c = tr.components[i];
    comps[component_keys()[i]] =
        Json{{"raw", c.raw}, {"weight", c.weight}, {"weighted", c.weighted}, {"enabled", c.enabled}};
  }
  return Json{{"t", t},
              {"components", std::move(comps)},
              {"raw_sum", tr.raw_sum},
              {"clipped", tr.clipped},
              {"clip_hit", tr.clip_hit}};
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const fs::path& p) : out_(p, std::ios::trunc) {
    if (!out_) throw Error("cannot write " + p.string());
  }
  void write(const Json& j) { out_ << j.dump() << '\n'; }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

Json eval_json(std::int64_t t, const RolloutResult& r) {
  return Json{{"t", t},
              {"final_equity", r.final_equity},
              {"cumulative_return", r.metrics.cumulative_return},
              {"sharpe", r.metrics.sharpe},
              {"max_drawdown", r.metrics.max_drawdown},
              {"trade_count", r.metrics.trade_count},
              {"violations", r.violations},
              {"avg_pyramid_depth", r.metrics.avg_pyramid_depth},
              {"avg_martingale_depth", r.metrics.avg_martingale_depth},
              {"execution_checksum", hash_hex(r.execution_checksum)}};
}

struct EpisodeStats {
  std::int64_t index = 0;
  std::int64_t start_t = 0;
  std::int64_t steps = 0;
  double reward_sum = 0.0;
  std::int64_t violations = 0;
  std::int64_t liquidations = 0;
  double start_equity = 0.0;
};

Json episode_json(const EpisodeStats& e, std::int64_t end_t, const PortfolioState& s,
                  const std::string& reason) {
  return Json{{"episode", e.index},
              {"start_t", e.start_t},
              {"end_t", end_t},
              {"steps", e.steps},
              {"reason", reason},
              {"final_equity", s.equity},
              {"return", e.start_equity != 0.0 ? s.equity / e.start_equity - 1.0 : 0.0},
              {"max_drawdown_at_end", s.current_drawdown},
              {"reward_sum", e.reward_sum},
              {"violations", e.violations},
              {"liquidations", e.liquidations}};
}

}  // namespace

RunArtifacts run_training(const ResolvedConfig& cfg, const RunOptions& opt) {
  const RunConfig rc = to_runtime(cfg);
  RunArtifacts art;
  art.label = !opt.label.empty() ? opt.label : (rc.variant.empty() ? "run" : rc.variant);
  art.config_hash = cfg.hash();
  art.dir = unique_run_dir(opt.out_root, art.label);
  fs::create_directories(art.dir / "checkpoints");
  art.resolved_config = art.dir / "resolved_config.yaml";
  art.step_log = art.dir / "step_log.jsonl";
  art.episode_log = art.dir / "episode_log.jsonl";
  art.reward_trace_log = art.dir / "reward_trace_log.jsonl";
  art.eval_log = art.dir / "eval_log.jsonl";
  art.checkpoint = art.dir / "checkpoints" / "final.ckpt";
  art.metrics_report = art.dir / "metrics_report.csv";
  art.curve = art.dir / "curve.csv";
  art.trades = art.dir / "trades.csv";

  const std::string config_text = cfg.to_yaml();
  write_text(art.resolved_config, config_text);

  PreparedData data = build_dataset(rc);
  {
    std::ofstream sc(art.dir / "scaler.txt");
    write_scaler(sc, data.scaler);
  }
  auto train = std::make_shared<const MarketSlice>(std::move(data.split.train));

  SeedStreams streams = seed_all(rc.seed);
  const std::uint64_t env_seed = derive_seed(rc.seed, Stream::env);
  Environment env(rc.env, train);
  Agent agent(rc.agent, env.flat_dim(), env.n_actions(), streams.agent_init);
  if (agent.online().input_dim() != env.flat_dim() || agent.online().n_actions() != env.n_actions()) {
    throw ContractError("agent input/output layer does not match the observation dimensioning");
  }
  ReplayBuffer buffer(rc.training.buffer_size);
  const TrainingConfig& tc = rc.training;

  std::unique_ptr<JsonlWriter> step_log;
  std::unique_ptr<JsonlWriter> trace_log;
  if (tc.write_step_log) {
    step_log = std::make_unique<JsonlWriter>(art.step_log);
    trace_log = std::make_unique<JsonlWriter>(art.reward_trace_log);
  } else {
    write_text(art.step_log, "");
    write_text(art.reward_trace_log, "");
  }
  JsonlWriter episode_log(art.episode_log);
  JsonlWriter eval_log(art.eval_log);

  auto checkpoint_now = [&](std::int64_t t) {
    return Checkpoint{art.config_hash, config_text, t, t, agent.online(), agent.target(), agent.optimizer()};
  };

  Observation obs = env.reset(env_seed);
  EpisodeStats ep;
  ep.start_equity = env.state().equity;
  double last_loss = std::numeric_limits<double>::quiet_NaN();

  for (std::int64_t t = 0; t < tc.total_timesteps; ++t) {
    const double eps = tc.epsilon.value(t);
    const PortfolioState state_before = env.state();
    const int action = agent.act(obs.flat, obs.mask, eps, streams.exploration);
    StepResult res = env.step(action);
    const StepInfo& info = res.info;
    buffer.push(Transition{obs.flat, action, res.reward, res.observation.flat, res.done, info.mask,
                           info.mask_next});

    bool learned = false;
    double loss = std::numeric_limits<double>::quiet_NaN();
    double grad_norm = std::numeric_limits<double>::quiet_NaN();
    if (t >= tc.learn_start && t % tc.learn_frequency == 0 && buffer.size() >= tc.batch_size) {
      Batch batch = buffer.sample(tc.batch_size, streams.replay);
      if (art.cadence.learn_steps == opt.inject_nan_at_learn_step) {
        batch.r(0) = std::numeric_limits<double>::quiet_NaN();
        batch.done[0] = 1;
      }
      try {
        const TrainStepResult tr = agent.learn(batch);
        loss = tr.loss;
        grad_norm = tr.grad_norm;
      } catch (const TrainingFault& e) {
        const fs::path fault = art.dir / "checkpoints" / "fault.ckpt";
        save_checkpoint(fault, checkpoint_now(t));
        if (step_log) step_log->flush();
        episode_log.write(episode_json(ep, t, env.state(), "training_fault"));
        throw TrainingFault(std::string(e.what()) + " (env step " + std::to_string(t) + ", episode " +
                            std::to_string(ep.index) + ", learn step " +
                            std::to_string(art.cadence.learn_steps) + ", last finite loss " +
                            std::to_string(last_loss) + "); state saved to " + fault.string());
      }
      last_loss = loss;
      learned = true;
      ++art.cadence.learn_steps;
    }

    bool synced = false;
    if (tc.target_update_in_learn_steps) {
      synced = learned && art.cadence.learn_steps % tc.target_update_interval == 0;
    } else {
      synced = t % tc.target_update_interval == 0;
    }
    if (synced) {
      agent.sync_target();
      ++art.cadence.target_syncs;
    }

    bool evaluated = false;
    if (tc.eval_interval > 0 && t % tc.eval_interval == 0) {
      GreedyQPolicy greedy(agent.online());
      for (std::int64_t k = 0; k < tc.eval_episodes; ++k) {
        eval_log.write(eval_json(t, rollout(greedy, rc.env, train, env_seed)));
      }
      evaluated = true;
      ++art.cadence.evals;
    }

    ep.steps += 1;
    ep.reward_sum += res.reward;
    ep.violations += info.violation ? 1 : 0;
    ep.liquidations += info.liquidation_event ? 1 : 0;

    if (step_log) {
      Json j;
      j["t"] = t;
      j["episode"] = ep.index;
      j["cursor"] = info.cursor;
      j["timestamp"] = format_iso8601(train->bars[info.cursor].timestamp);
      j["proposed_action"] = info.proposed_action;
      j["executed_action"] = static_cast<int>(info.executed_action);
      j["mask"] = mask_string(info.mask);
      j["mask_next"] = mask_string(info.mask_next);
      j["reward"] = res.reward;
      j["done"] = res.done;
      j["violation"] = info.violation;
      j["liquidation_event"] = info.liquidation_event;
      j["equity"] = info.equity;
      j["used_margin"] = info.next_portfolio.used_margin;
      j["cost_trace"] = cost_json(info.cost_trace);
      j["realized_delta"] = info.realized_delta;
      j["unrealized_delta"] = info.unrealized_delta;
      j["traded_lots"] = info.traded_lots;
      j["state"] = portfolio_json(state_before);
      j["epsilon"] = eps;
      j["learn"] = learned;
      j["loss"] = learned ? Json(loss) : Json(nullptr);
      j["grad_norm"] = learned ? Json(grad_norm) : Json(nullptr);
      j["target_sync"] = synced;
      j["eval"] = evaluated;
      step_log->write(j);
      trace_log->write(reward_trace_json(t, info.reward_trace));
    }

    if (res.done) {
      const std::string reason = info.liquidation_event ? "liquidation"
                                 : env.cursor() + 1 >= train->size() ? "data_end"
                                                                     : "max_steps";
      episode_log.write(episode_json(ep, t, env.state(), reason));
      obs = env.reset(env_seed);
      ep = EpisodeStats{};
      ep.index = ++art.episodes;
      ep.start_t = t + 1;
      ep.start_equity = env.state().equity;
    } else {
      obs = std::move(res.observation);
    }
    art.steps = t + 1;
    if (opt.progress && (t + 1) % 5000 == 0) {
      *opt.progress << "[" << art.label << "] step " << (t + 1) << "/" << tc.total_timesteps
                    << " learn=" << art.cadence.learn_steps << " eps=" << eps << " loss=" << last_loss
                    << std::endl;
    }
  }
  if (ep.steps > 0) episode_log.write(episode_json(ep, art.steps - 1, env.state(), "truncated"));
  art.episodes += ep.steps > 0 ? 1 : 0;

  save_checkpoint(art.checkpoint, checkpoint_now(tc.total_timesteps));

  GreedyQPolicy greedy(agent.online());
  const RolloutResult final_eval = rollout(greedy, rc.env, train, env_seed);
  art.final_metrics = final_eval.metrics;
  art.final_equity = final_eval.final_equity;
  art.final_violations = final_eval.violations;
  emit_report({{art.label, final_eval.metrics}}, art.metrics_report);
  write_curve_csv(final_eval.curve, art.curve);
  write_trades_csv(final_eval.trades, art.trades);
  return art;
}

RolloutResult backtest_checkpoint(const fs::path& path, bool heldout) {
  const Checkpoint ckpt = load_checkpoint(path);
  const ResolvedConfig cfg = resolve_config(ckpt.config_text);
  if (cfg.hash() != ckpt.config_hash) {
    throw DataError("checkpoint " + path.string() + ": embedded config does not match its hash");
  }
  const RunConfig rc = to_runtime(cfg);
  PreparedData data = build_dataset(rc);
  MarketSlice slice = heldout ? std::move(data.split.heldout) : std::move(data.split.train);
  if (slice.size() < rc.env.window + 2) {
    throw DataError(std::string(heldout ? "heldout" : "train") + " slice too short to backtest");
  }
  auto shared = std::make_shared<const MarketSlice>(std::move(slice));
  const Environment probe(rc.env, shared);
  if (ckpt.online.input_dim() != probe.flat_dim() || ckpt.online.n_actions() != probe.n_actions()) {
    throw ContractError("checkpoint network " + std::to_string(ckpt.online.input_dim()) + "->" +
                        std::to_string(ckpt.online.n_actions()) + " does not match env " +
                        std::to_string(probe.flat_dim()) + "->" + std::to_string(probe.n_actions()));
  }
  GreedyQPolicy greedy(ckpt.online);
  return rollout(greedy, rc.env, shared, derive_seed(rc.seed, Stream::env));
}

Family parse_family(const std::string& name) {
  if (name == "e01" || name == "E01") return Family::e01;
  if (name == "e02" || name == "E02") return Family::e02;
  if (name == "e03" || name == "E03") return Family::e03;
  throw ConfigError("unknown experiment family '" + name + "' (expected e01, e02 or e03)");
}

std::string to_string(Family f) {
  switch (f) {
    case Family::e01: return "e01";
    case Family::e02: return "e02";
    case Family::e03: return "e03";
  }
  return "?";
}

std::vector<FamilyVariant> family_variants(Family f, const fs::path& root) {
  std::vector<FamilyVariant> v;
  auto add = [&](const std::string& dir, const std::string& stem) {
    v.push_back({stem, root / dir / (stem + ".yaml")});
  };
  switch (f) {
    case Family::e01:
      for (const char* s : {"r1_profit_only", "r2_holding_volatility", "r3_drawdown_transaction",
                            "r4_overtrading_pyramid", "r5_martingale_margin", "r6_liquidation",
                            "r7_full"}) {
        add("rewards", s);
      }
      break;
    case Family::e02:
      add("actions", "simplified");
      add("actions", "extended");
      break;
    case Family::e03:
      for (const char* s : {"s1_no_scaling", "s2_pyramid_only", "s3_martingale_only", "s4_both"}) {
        add("scaling", s);
      }
      break;
  }
  for (const FamilyVariant& fv : v) {
    if (!fs::exists(fv.file)) throw ConfigError("missing variant file " + fv.file.string());
  }
  return v;
}

bool family_key_declared(Family f, const std::string& key) {
  auto starts = [&](const char* p) { return key.rfind(p, 0) == 0; };
  switch (f) {
    case Family::e01: return starts("experiment.") || starts("reward.");
    case Family::e02: return key == "environment.actions.mode";
    case Family::e03: return starts("experiment.") || starts("environment.actions.scaling.");
  }
  return false;
}

ResolvedConfig resolve_family_variant(const fs::path& base, const FamilyVariant& v,
                                      const std::vector<std::string>& post) {
  return resolve_config_files(base, {v.file}, post);
}

FamilyResult run_experiment_family(Family f, const fs::path& base, const fs::path& root,
                                   const std::vector<std::string>& post, const RunOptions& opt) {
  FamilyResult out;
  out.family = f;
  const auto variants = family_variants(f, root);
  for (const FamilyVariant& v : variants) {
    out.labels.push_back(v.label);
    out.configs.push_back(resolve_family_variant(base, v, post));
  }
  for (std::size_t i = 1; i < out.configs.size(); ++i) {
    for (const std::string& k : config_diff(out.configs[0], out.configs[i])) {
      if (!family_key_declared(f, k)) {
        throw ConfigError("family " + to_string(f) + " variant " + out.labels[i] +
                          " changes undeclared key '" + k + "'");
      }
    }
  }
  const fs::path family_root = unique_run_dir(opt.out_root, to_string(f));
  fs::create_directories(family_root);
  std::vector<LabeledReport> reports;
  for (std::size_t i = 0; i < variants.size(); ++i) {
    RunOptions o = opt;
    o.out_root = family_root;
    o.label = out.labels[i];
    out.runs.push_back(run_training(out.configs[i], o));
    reports.push_back({out.labels[i], out.runs.back().final_metrics});
  }
  out.report = family_root / "family_report.csv";
  emit_report(reports, out.report);
  return out;
}

}  // namespace fxrl
