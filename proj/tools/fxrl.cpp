#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fxrl/config.hpp"
#include "fxrl/error.hpp"
#include "fxrl/eval.hpp"
#include "fxrl/runner.hpp"
#include "fxrl/verify.hpp"

namespace fs = std::filesystem;
using namespace fxrl;

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, training_fault = 4 };

// First file is the base, the rest are applied over it in order.
ResolvedConfig resolve_cli(const std::vector<std::string>& files, const std::vector<std::string>& overrides,
                           const std::string& seed) {
  if (files.empty()) throw ConfigError("--config is required");
  std::vector<fs::path> extra(files.begin() + 1, files.end());
  std::vector<std::string> assignments = overrides;
  if (!seed.empty()) assignments.push_back("training.random_seed=" + seed);
  return resolve_config_files(files.front(), extra, assignments);
}

void print_metrics(const std::string& label, const MetricsReport& m) {
  std::cout << label << ": return=" << m.cumulative_return << " sharpe=" << m.sharpe
            << " sortino=" << m.sortino << " mdd=" << m.max_drawdown << " win=" << m.win_rate
            << " trades=" << m.trade_count << " turnover=" << m.turnover
            << " avg_pyr=" << m.avg_pyramid_depth << " avg_mart=" << m.avg_martingale_depth
            << " liquidations=" << m.liquidation_count << "\n";
}

void print_run(const RunArtifacts& a) {
  std::cout << "run " << a.label << " -> " << a.dir.string() << " (config " << hash_hex(a.config_hash)
            << ", " << a.steps << " steps, " << a.episodes << " episodes, " << a.cadence.learn_steps
            << " learn steps, " << a.cadence.target_syncs << " syncs, " << a.cadence.evals << " evals)\n";
  print_metrics("  final", a.final_metrics);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fxrl: leveraged FX trading environment and DQN/DDQN training"};
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::vector<std::string> overrides;
  std::string seed;
  std::string out = "runs";
  bool quiet = false;

  auto* run = app.add_subcommand("run", "train one configuration");
  run->add_option("--config", configs, "base config, then overlay files")->required();
  run->add_option("--override", overrides, "key=value assignment");
  run->add_option("--seed", seed, "training.random_seed");
  run->add_option("--out", out, "output root");
  run->add_flag("--quiet", quiet, "no progress lines");

  std::string family_name;
  std::string configs_root;
  auto* family = app.add_subcommand("family", "run every variant of an experiment family");
  family->add_option("--name", family_name, "e01 | e02 | e03")->required();
  family->add_option("--config", configs, "base config")->required();
  family->add_option("--configs-root", configs_root, "variant tree (default: base config's directory)");
  family->add_option("--override", overrides, "key=value applied after the variant");
  family->add_option("--seed", seed, "training.random_seed");
  family->add_option("--out", out, "output root");
  family->add_flag("--quiet", quiet, "no progress lines");

  std::uint64_t verify_seed = VerifyOptions{}.seed;
  int probes = VerifyOptions{}.probes;
  auto* verify = app.add_subcommand("verify", "anti-lookahead conformance suite");
  verify->add_option("--seed", verify_seed, "probe seed");
  verify->add_option("--probes", probes, "probes per invariance test");

  std::string strategy;
  auto* bench = app.add_subcommand("bench", "roll out a benchmark policy");
  bench->add_option("--strategy", strategy, "random | buy_and_hold | momentum | mean_reversion | hold")
      ->required();
  bench->add_option("--config", configs, "base config, then overlay files");
  bench->add_option("--override", overrides, "key=value assignment");
  bench->add_option("--seed", seed, "training.random_seed");
  bench->add_option("--out", out, "output root");
  bool heldout = false;
  bench->add_flag("--heldout", heldout, "use the heldout slice");

  std::string spec_path;
  std::uint64_t data_seed = 0;
  std::string data_out = "synthetic.csv";
  auto* gen = app.add_subcommand("gen-data", "write a synthetic OHLCV series");
  gen->add_option("--spec", spec_path, "config file with data.bars and data.synthetic.*")->required();
  gen->add_option("--seed", data_seed, "generator seed")->required();
  gen->add_option("--out", data_out, "CSV destination");

  std::string checkpoint;
  auto* backtest = app.add_subcommand("backtest", "greedy rollout of a checkpoint");
  backtest->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  backtest->add_flag("--heldout", heldout, "use the heldout slice");
  backtest->add_option("--out", out, "output root");

  std::string corpus = "configs";
  auto* validate = app.add_subcommand("validate-configs", "resolve every file of a config tree");
  validate->add_option("--root", corpus, "config tree");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? Exit::ok : Exit::config_error;
  }

  try {
    if (run->parsed()) {
      const ResolvedConfig cfg = resolve_cli(configs, overrides, seed);
      RunOptions opt;
      opt.out_root = out;
      opt.progress = quiet ? nullptr : &std::cerr;
      print_run(run_training(cfg, opt));
      return Exit::ok;
    }
    if (family->parsed()) {
      const Family f = parse_family(family_name);
      const fs::path base = configs.front();
      const fs::path root = configs_root.empty() ? base.parent_path() : fs::path(configs_root);
      std::vector<std::string> post = overrides;
      if (!seed.empty()) post.push_back("training.random_seed=" + seed);
      RunOptions opt;
      opt.out_root = out;
      opt.progress = quiet ? nullptr : &std::cerr;
      const FamilyResult r = run_experiment_family(f, base, root, post, opt);
      for (const RunArtifacts& a : r.runs) print_run(a);
      std::cout << "report " << r.report.string() << "\n";
      return Exit::ok;
    }
    if (verify->parsed()) {
      VerifyOptions opt;
      opt.seed = verify_seed;
      opt.probes = probes;
      const ConformanceReport conf = run_conformance(opt);
      const ConformanceReport sens = run_sensitivity(opt);
      std::cout << "conformance\n" << format_report(conf) << "sensitivity (pass = break detected)\n"
                << format_report(sens);
      return conf.all_pass() && sens.all_pass() ? Exit::ok : Exit::failure;
    }
    if (bench->parsed()) {
      const ResolvedConfig cfg =
          configs.empty() ? resolve_config("", {}, overrides) : resolve_cli(configs, overrides, seed);
      const RunConfig rc = to_runtime(cfg);
      PreparedData data = build_dataset(rc);
      auto slice = std::make_shared<const MarketSlice>(heldout ? std::move(data.split.heldout)
                                                               : std::move(data.split.train));
      auto policy = make_benchmark_policy(strategy, rc.benchmark, derive_seed(rc.seed, Stream::exploration));
      const RolloutResult r = rollout(*policy, rc.env, slice, derive_seed(rc.seed, Stream::env));
      const fs::path dir = unique_run_dir(out, "bench_" + strategy);
      fs::create_directories(dir);
      emit_report({{strategy, r.metrics}}, dir / "metrics_report.csv");
      write_curve_csv(r.curve, dir / "curve.csv");
      write_trades_csv(r.trades, dir / "trades.csv");
      print_metrics(strategy, r.metrics);
      std::cout << "violations=" << r.violations << " -> " << dir.string() << "\n";
      return Exit::ok;
    }
    if (gen->parsed()) {
      const RunConfig rc = to_runtime(resolve_config(read_text_file(spec_path)));
      const auto bars = generate_synthetic(rc.data.synthetic, rc.data.bars, data_seed);
      std::ofstream f(data_out, std::ios::trunc);
      if (!f) throw DataError("cannot write " + data_out);
      write_ohlcv(f, bars);
      std::cout << "wrote " << bars.size() << " bars to " << data_out << "\n";
      return Exit::ok;
    }
    if (backtest->parsed()) {
      const RolloutResult r = backtest_checkpoint(checkpoint, heldout);
      const fs::path dir = unique_run_dir(out, "backtest");
      fs::create_directories(dir);
      emit_report({{"backtest", r.metrics}}, dir / "metrics_report.csv");
      write_curve_csv(r.curve, dir / "curve.csv");
      write_trades_csv(r.trades, dir / "trades.csv");
      print_metrics("backtest", r.metrics);
      std::cout << "-> " << dir.string() << "\n";
      return Exit::ok;
    }
    if (validate->parsed()) {
      bool all = true;
      for (const CorpusEntry& e : validate_corpus(corpus)) {
        all = all && e.ok;
        std::cout << (e.ok ? "ok   " : "FAIL ") << e.file.string() << " "
                  << (e.ok ? hash_hex(e.hash) : e.error) << "\n";
      }
      return all ? Exit::ok : Exit::config_error;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return Exit::config_error;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return Exit::data_error;
  } catch (const TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << "\n";
    return Exit::training_fault;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return Exit::failure;
  }
  return Exit::failure;
}
