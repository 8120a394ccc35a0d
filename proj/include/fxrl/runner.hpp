#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "fxrl/config.hpp"
#include "fxrl/eval.hpp"

namespace fxrl {

// Synthetic generation or CSV ingestion per the config, then split, features
// and train-only scaling.
PreparedData build_dataset(const RunConfig& rc);
std::vector<Bar> load_bars(const RunConfig& rc);

// `root/label`, or `root/label_N` for the first free N.
std::filesystem::path unique_run_dir(const std::filesystem::path& root, const std::string& label);

struct RunOptions {
  std::filesystem::path out_root = "runs";
  std::string label;            // directory name; defaults to experiment.variant or "run"
  std::ostream* progress = nullptr;
  // Test hook: poison the targets of this learn step with NaN.
  std::int64_t inject_nan_at_learn_step = -1;
};

struct CadenceCounts {
  std::int64_t learn_steps = 0;
  std::int64_t target_syncs = 0;
  std::int64_t evals = 0;

  bool operator==(const CadenceCounts&) const = default;
};

// Closed-form counts for a run of cfg.total_timesteps env steps.
CadenceCounts expected_cadence(const TrainingConfig& cfg);

struct RunArtifacts {
  std::filesystem::path dir;
  std::filesystem::path resolved_config;
  std::filesystem::path step_log;
  std::filesystem::path episode_log;
  std::filesystem::path reward_trace_log;
  std::filesystem::path eval_log;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_report;
  std::filesystem::path curve;
  std::filesystem::path trades;

  std::string label;
  std::uint64_t config_hash = 0;
  std::int64_t steps = 0;
  std::int64_t episodes = 0;
  CadenceCounts cadence;
  MetricsReport final_metrics;
  double final_equity = 0.0;
  std::int64_t final_violations = 0;
};

// Algorithm loop: act, store, learn, sync, evaluate; writes every artifact.
RunArtifacts run_training(const ResolvedConfig& cfg, const RunOptions& opt = {});

// Greedy rollout of a checkpointed network on the split its config names.
RolloutResult backtest_checkpoint(const std::filesystem::path& ckpt, bool heldout = false);

enum class Family { e01, e02, e03 };
Family parse_family(const std::string& name);
std::string to_string(Family f);

struct FamilyVariant {
  std::string label;
  std::filesystem::path file;
};

// Variant files of a family in run order.
std::vector<FamilyVariant> family_variants(Family f, const std::filesystem::path& configs_root);
// Whether a resolved key may differ between runs of the family.
bool family_key_declared(Family f, const std::string& key);

// base + variant + post-assignments.
ResolvedConfig resolve_family_variant(const std::filesystem::path& base, const FamilyVariant& v,
                                      const std::vector<std::string>& post);

struct FamilyResult {
  Family family = Family::e01;
  std::vector<std::string> labels;
  std::vector<ResolvedConfig> configs;
  std::vector<RunArtifacts> runs;
  std::filesystem::path report;
};

FamilyResult run_experiment_family(Family f, const std::filesystem::path& base,
                                   const std::filesystem::path& configs_root,
                                   const std::vector<std::string>& post, const RunOptions& opt = {});

}  // namespace fxrl
