#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fxrl/agent.hpp"
#include "fxrl/data.hpp"
#include "fxrl/env.hpp"

namespace fxrl {

using IntList = std::vector<std::int64_t>;
using ConfigValue = std::variant<bool, std::int64_t, double, std::string, IntList>;

enum class ValueType { boolean, integer, real, text, int_list };

struct SchemaEntry {
  ValueType type;
  ConfigValue default_value;
};

// Every accepted dotted key with its type and built-in default.
const std::map<std::string, SchemaEntry>& config_schema();

std::string format_value(const ConfigValue& v);

// Flattened, fully-populated configuration.
class ResolvedConfig {
 public:
  ResolvedConfig();  // schema defaults

  const std::map<std::string, ConfigValue>& values() const { return values_; }
  const ConfigValue& at(const std::string& key) const;
  void set(const std::string& key, ConfigValue v);  // type-checked

  bool get_bool(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  const IntList& get_int_list(const std::string& key) const;

  // Sorted `key=value` lines; the hash is FNV-1a 64 of this text.
  std::string canonical_text() const;
  std::uint64_t hash() const;
  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("training.random_seed")); }

  // Nested YAML that resolves back to the same values (and hash).
  std::string to_yaml() const;

  bool operator==(const ResolvedConfig& o) const { return values_ == o.values_; }

 private:
  std::map<std::string, ConfigValue> values_;
};

std::string hash_hex(std::uint64_t h);
std::uint64_t fnv1a64(const std::string& text);

// Applies one YAML document over `cfg`. Unknown keys and type mismatches are
// ConfigErrors naming the key; `source` labels the messages.
void apply_yaml_text(ResolvedConfig& cfg, const std::string& yaml_text, const std::string& source);
// `key=value`, value parsed as a YAML scalar or flow sequence.
void apply_override(ResolvedConfig& cfg, const std::string& assignment);

// Defaults, then base text, then each override text, then key=value pairs.
ResolvedConfig resolve_config(const std::string& base_text, const std::vector<std::string>& override_texts = {},
                              const std::vector<std::string>& assignments = {});

std::string read_text_file(const std::filesystem::path& path);
ResolvedConfig resolve_config_files(const std::filesystem::path& base,
                                    const std::vector<std::filesystem::path>& overrides = {},
                                    const std::vector<std::string>& assignments = {});

// Keys whose values differ.
std::vector<std::string> config_diff(const ResolvedConfig& a, const ResolvedConfig& b);

struct TrainingConfig {
  std::int64_t total_timesteps = 1000000;
  std::int64_t learn_start = 10000;
  std::int64_t learn_frequency = 4;
  std::size_t batch_size = 128;
  std::size_t buffer_size = 40000;
  std::int64_t target_update_interval = 2000;
  bool target_update_in_learn_steps = false;
  std::int64_t eval_interval = 10000;
  std::int64_t eval_episodes = 1;
  EpsilonSchedule epsilon;
  bool write_step_log = true;
};

struct DataConfig {
  std::string source = "synthetic";  // synthetic | csv
  std::string path;
  std::string pair = "EURUSD";
  double train_fraction = 0.8;
  std::size_t bars = 5000;
  SyntheticSpec synthetic;
  FeatureSpec features;
};

struct BenchmarkConfig {
  std::string strategy = "random";
  std::size_t momentum_fast = 10;
  std::size_t momentum_slow = 50;
  std::size_t bollinger_window = 20;
  double bollinger_k = 2.0;
};

struct RunConfig {
  std::string family;
  std::string variant;
  EnvConfig env;
  AgentConfig agent;
  TrainingConfig training;
  DataConfig data;
  BenchmarkConfig benchmark;
  std::uint64_t seed = 42;
};

// Typed runtime view; range checks raise ConfigError.
RunConfig to_runtime(const ResolvedConfig& cfg);

struct CorpusEntry {
  std::filesystem::path file;
  bool ok = false;
  std::string error;
  std::uint64_t hash = 0;
};

// Resolves base.yaml alone and base + every other file in the tree; checks
// each snapshot round-trips to its hash.
std::vector<CorpusEntry> validate_corpus(const std::filesystem::path& configs_root);

}  // namespace fxrl
