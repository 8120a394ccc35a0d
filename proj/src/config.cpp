#include "fxrl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fxrl/error.hpp"

namespace fxrl {

namespace {

std::map<std::string, SchemaEntry> build_schema() {
  std::map<std::string, SchemaEntry> s;
  auto b = [&](const std::string& k, bool v) { s[k] = {ValueType::boolean, v}; };
  auto i = [&](const std::string& k, std::int64_t v) { s[k] = {ValueType::integer, v}; };
  auto d = [&](const std::string& k, double v) { s[k] = {ValueType::real, v}; };
  auto t = [&](const std::string& k, std::string v) { s[k] = {ValueType::text, std::move(v)}; };

  t("experiment.family", "");
  t("experiment.variant", "");

  t("agent.name", "doubledqn");
  s["agent.model.hidden_dims"] = {ValueType::int_list, IntList{512, 512, 256}};
  i("agent.training.total_timesteps", 1000000);
  i("agent.training.learn_start_steps", 10000);
  i("agent.training.learn_frequency", 4);
  i("agent.training.batch_size", 128);
  i("agent.training.buffer_size", 40000);
  d("agent.training.gamma", 0.99);
  i("agent.training.target_update_interval", 2000);
  t("agent.training.target_update_unit", "env_steps");
  i("agent.training.eval_interval", 10000);
  i("agent.training.eval_episodes", 1);
  d("agent.training.grad_clip", 10.0);
  d("agent.training.huber_delta", 1.0);
  t("agent.optimizer.name", "adam");
  d("agent.optimizer.learning_rate", 2.5e-4);
  d("agent.optimizer.beta1", 0.9);
  d("agent.optimizer.beta2", 0.999);
  d("agent.optimizer.epsilon", 1e-8);
  d("agent.exploration.epsilon_start", 1.0);
  d("agent.exploration.epsilon_end", 0.01);
  i("agent.exploration.epsilon_decay_steps", 30000);

  const RewardConfig full = full_reward_config();
  for (std::size_t c = 0; c < kComponentCount; ++c) {
    const std::string base = "reward.components." + component_keys()[c];
    b(base + ".enabled", true);
    d(base + ".weight", full.gates[c].weight);
  }
  const RewardParams rp;
  d("reward.params.holding_max_drawdown", rp.holding_max_drawdown);
  d("reward.params.severe_drawdown", rp.severe_drawdown);
  d("reward.params.severe_multiplier", rp.severe_multiplier);
  i("reward.params.overtrading_window", rp.overtrading_window);
  i("reward.params.overtrading_threshold", rp.overtrading_threshold);
  i("reward.params.volatility_window", rp.volatility_window);
  d("reward.params.margin_threshold", rp.margin_threshold);
  t("reward_normalization.mode", "clip_only");
  d("reward_normalization.clip_min", -1.0);
  d("reward_normalization.clip_max", 1.0);

  i("environment.window", 24);
  d("environment.initial_capital", 100000.0);
  i("environment.max_episode_steps", 0);
  const FrictionConfig f;
  d("environment.friction.spread_pips", f.spread_pips);
  d("environment.friction.slippage_pips", f.slippage_pips);
  d("environment.friction.commission_per_lot", f.commission_per_lot);
  d("environment.friction.pip_size", f.pip_size);
  d("environment.friction.long_swap_pips_per_day", f.long_swap_pips_per_day);
  d("environment.friction.short_swap_pips_per_day", f.short_swap_pips_per_day);
  i("environment.friction.rollover_hour_utc", f.rollover_hour_utc);
  const RiskConfig r;
  d("environment.risk.max_leverage", r.max_leverage);
  d("environment.risk.maintenance_margin_ratio", r.maintenance_margin_ratio);
  d("environment.risk.liquidation_equity_fraction", r.liquidation_equity_fraction);
  i("environment.risk.depth_cap", r.depth_cap);
  d("environment.risk.base_lot", r.base_lot);
  d("environment.risk.reduce_fraction", r.reduce_fraction);
  t("environment.actions.mode", "extended");
  b("environment.actions.scaling.pyramid", true);
  b("environment.actions.scaling.martingale", true);

  t("data.source", "synthetic");
  t("data.path", "");
  t("data.pair", "EURUSD");
  d("data.train_fraction", 0.8);
  i("data.bars", 5000);
  const SyntheticSpec ss;
  t("data.synthetic.regime", to_string(ss.regime));
  d("data.synthetic.initial_price", ss.initial_price);
  d("data.synthetic.drift", ss.drift);
  d("data.synthetic.volatility", ss.volatility);
  d("data.synthetic.slope", ss.slope);
  d("data.synthetic.noise", ss.noise);
  d("data.synthetic.reversion", ss.reversion);
  d("data.synthetic.wick", ss.wick);
  t("data.synthetic.start", format_iso8601(ss.start));
  i("data.features.price_change_horizon", 1);
  i("data.features.warmup", 74);

  t("benchmark.strategy", "random");
  i("benchmark.momentum.fast_window", 10);
  i("benchmark.momentum.slow_window", 50);
  i("benchmark.mean_reversion.window", 20);
  d("benchmark.mean_reversion.num_std", 2.0);

  i("training.random_seed", 42);
  b("training.write_step_log", true);
  return s;
}

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::boolean: return "boolean";
    case ValueType::integer: return "integer";
    case ValueType::real: return "real";
    case ValueType::text: return "string";
    case ValueType::int_list: return "integer list";
  }
  return "?";
}

const SchemaEntry& schema_entry(const std::string& key) {
  const auto& s = config_schema();
  auto it = s.find(key);
  if (it == s.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

bool is_known_prefix(const std::string& prefix) {
  const auto& s = config_schema();
  const std::string p = prefix + ".";
  auto it = s.lower_bound(p);
  return it != s.end() && it->first.compare(0, p.size(), p) == 0;
}

ConfigValue convert_node(const std::string& key, const YAML::Node& node, const std::string& source) {
  const SchemaEntry& e = schema_entry(key);
  auto mismatch = [&](const std::string& got) -> ConfigError {
    return ConfigError(source + ": type mismatch for '" + key + "': expected " + type_name(e.type) +
                       ", got " + got);
  };
  if (e.type == ValueType::int_list) {
    if (!node.IsSequence()) throw mismatch(node.IsScalar() ? "'" + node.Scalar() + "'" : "a mapping");
    IntList out;
    for (const auto& item : node) {
      try {
        out.push_back(item.as<std::int64_t>());
      } catch (const YAML::Exception&) {
        throw mismatch("a non-integer list element");
      }
    }
    return out;
  }
  if (!node.IsScalar()) throw mismatch(node.IsSequence() ? "a sequence" : "a mapping or null");
  const std::string& text = node.Scalar();
  try {
    switch (e.type) {
      case ValueType::boolean:
        return node.as<bool>();
      case ValueType::integer:
        return node.as<std::int64_t>();
      case ValueType::real:
        return node.as<double>();
      case ValueType::text:
        return text;
      case ValueType::int_list:
        break;
    }
  } catch (const YAML::Exception&) {
    throw mismatch("'" + text + "'");
  }
  throw mismatch("'" + text + "'");
}

void flatten_into(ResolvedConfig& cfg, const YAML::Node& node, const std::string& prefix,
                  const std::string& source) {
  if (node.IsMap()) {
    for (const auto& kv : node) {
      const std::string k = kv.first.as<std::string>();
      const std::string path = prefix.empty() ? k : prefix + "." + k;
      if (kv.second.IsMap() || kv.second.IsNull()) {
        if (!is_known_prefix(path)) {
          if (config_schema().count(path)) {
            if (kv.second.IsNull()) {
              throw ConfigError(source + ": missing value for '" + path + "'");
            }
            throw ConfigError(source + ": type mismatch for '" + path + "': got a mapping");
          }
          throw ConfigError(source + ": unknown config key '" + path + "'");
        }
        if (kv.second.IsMap()) flatten_into(cfg, kv.second, path, source);
        continue;
      }
      if (!config_schema().count(path)) {
        throw ConfigError(source + ": unknown config key '" + path + "'");
      }
      cfg.set(path, convert_node(path, kv.second, source));
    }
    return;
  }
  if (node.IsNull()) return;
  throw ConfigError(source + ": top level must be a mapping");
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const std::map<std::string, SchemaEntry>& config_schema() {
  static const std::map<std::string, SchemaEntry> kSchema = build_schema();
  return kSchema;
}

std::string format_value(const ConfigValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, bool>) {
          return x ? "true" : "false";
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
          return std::to_string(x);
        } else if constexpr (std::is_same_v<T, double>) {
          char buf[64];
          auto res = std::to_chars(buf, buf + sizeof(buf), x);
          std::string s(buf, res.ptr);
          if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
          return s;
        } else if constexpr (std::is_same_v<T, std::string>) {
          return x;
        } else {
          std::string s = "[";
          for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + std::to_string(x[i]);
          return s + "]";
        }
      },
      v);
}

ResolvedConfig::ResolvedConfig() {
  for (const auto& [k, e] : config_schema()) values_[k] = e.default_value;
}

const ConfigValue& ResolvedConfig::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void ResolvedConfig::set(const std::string& key, ConfigValue v) {
  const SchemaEntry& e = schema_entry(key);
  if (e.type == ValueType::real && std::holds_alternative<std::int64_t>(v)) {
    v = static_cast<double>(std::get<std::int64_t>(v));
  }
  if (v.index() != e.default_value.index()) {
    throw ConfigError("type mismatch for '" + key + "': expected " + type_name(e.type));
  }
  values_[key] = std::move(v);
}

bool ResolvedConfig::get_bool(const std::string& key) const { return std::get<bool>(at(key)); }
std::int64_t ResolvedConfig::get_int(const std::string& key) const {
  return std::get<std::int64_t>(at(key));
}
double ResolvedConfig::get_double(const std::string& key) const { return std::get<double>(at(key)); }
const std::string& ResolvedConfig::get_string(const std::string& key) const {
  return std::get<std::string>(at(key));
}
const IntList& ResolvedConfig::get_int_list(const std::string& key) const {
  return std::get<IntList>(at(key));
}

std::string ResolvedConfig::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + format_value(v) + "\n";
  return out;
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t ResolvedConfig::hash() const { return fnv1a64(canonical_text()); }

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ResolvedConfig::to_yaml() const {
  std::ostringstream out;
  out << "# config hash " << hash_hex(hash()) << "\n";
  std::vector<std::string> prev;
  for (const auto& [key, value] : values_) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t dot; (dot = key.find('.', start)) != std::string::npos; start = dot + 1) {
      parts.push_back(key.substr(start, dot - start));
    }
    const std::string leaf = key.substr(start);
    std::size_t common = 0;
    while (common < parts.size() && common < prev.size() && parts[common] == prev[common]) ++common;
    for (std::size_t d = common; d < parts.size(); ++d) {
      out << std::string(2 * d, ' ') << parts[d] << ":\n";
    }
    const bool is_text = std::holds_alternative<std::string>(value);
    out << std::string(2 * parts.size(), ' ') << leaf << ": "
        << (is_text ? quote(format_value(value)) : format_value(value)) << "\n";
    prev = std::move(parts);
  }
  return out.str();
}

void apply_yaml_text(ResolvedConfig& cfg, const std::string& yaml_text, const std::string& source) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(source + ": parse failure: " + e.what());
  }
  flatten_into(cfg, root, "", source);
}

void apply_override(ResolvedConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  if (!config_schema().count(key)) throw ConfigError("unknown config key '" + key + "'");
  YAML::Node node;
  try {
    node = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + assignment + "': parse failure: " + e.what());
  }
  if (schema_entry(key).type == ValueType::text && node.IsNull()) node = YAML::Node(text);
  cfg.set(key, convert_node(key, node, "override"));
}

ResolvedConfig resolve_config(const std::string& base_text, const std::vector<std::string>& override_texts,
                              const std::vector<std::string>& assignments) {
  ResolvedConfig cfg;
  apply_yaml_text(cfg, base_text, "base");
  for (std::size_t i = 0; i < override_texts.size(); ++i) {
    apply_yaml_text(cfg, override_texts[i], "override " + std::to_string(i + 1));
  }
  for (const std::string& a : assignments) apply_override(cfg, a);
  return cfg;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ResolvedConfig resolve_config_files(const std::filesystem::path& base,
                                    const std::vector<std::filesystem::path>& overrides,
                                    const std::vector<std::string>& assignments) {
  ResolvedConfig cfg;
  apply_yaml_text(cfg, read_text_file(base), base.string());
  for (const auto& p : overrides) apply_yaml_text(cfg, read_text_file(p), p.string());
  for (const std::string& a : assignments) apply_override(cfg, a);
  return cfg;
}

std::vector<std::string> config_diff(const ResolvedConfig& a, const ResolvedConfig& b) {
  std::vector<std::string> keys;
  for (const auto& [k, v] : a.values()) {
    if (!(b.at(k) == v)) keys.push_back(k);
  }
  return keys;
}

RunConfig to_runtime(const ResolvedConfig& c) {
  RunConfig rc;
  rc.family = c.get_string("experiment.family");
  rc.variant = c.get_string("experiment.variant");
  rc.seed = static_cast<std::uint64_t>(c.get_int("training.random_seed"));
  auto positive = [&](const std::string& key) {
    const std::int64_t v = c.get_int(key);
    if (v <= 0) throw ConfigError("'" + key + "' must be > 0");
    return v;
  };
  auto non_negative = [&](const std::string& key) {
    const std::int64_t v = c.get_int(key);
    if (v < 0) throw ConfigError("'" + key + "' must be >= 0");
    return v;
  };

  AgentConfig& ag = rc.agent;
  ag.algorithm = parse_algorithm(c.get_string("agent.name"));
  ag.hidden.clear();
  for (std::int64_t h : c.get_int_list("agent.model.hidden_dims")) {
    if (h <= 0) throw ConfigError("'agent.model.hidden_dims' entries must be > 0");
    ag.hidden.push_back(static_cast<std::size_t>(h));
  }
  ag.gamma = c.get_double("agent.training.gamma");
  if (!(ag.gamma >= 0.0 && ag.gamma <= 1.0)) throw ConfigError("'agent.training.gamma' must lie in [0, 1]");
  ag.grad_clip = c.get_double("agent.training.grad_clip");
  if (!(ag.grad_clip > 0.0)) throw ConfigError("'agent.training.grad_clip' must be > 0");
  ag.huber_delta = c.get_double("agent.training.huber_delta");
  if (!(ag.huber_delta > 0.0)) throw ConfigError("'agent.training.huber_delta' must be > 0");
  if (c.get_string("agent.optimizer.name") != "adam") {
    throw ConfigError("'agent.optimizer.name' must be adam");
  }
  ag.adam.learning_rate = c.get_double("agent.optimizer.learning_rate");
  ag.adam.beta1 = c.get_double("agent.optimizer.beta1");
  ag.adam.beta2 = c.get_double("agent.optimizer.beta2");
  ag.adam.epsilon = c.get_double("agent.optimizer.epsilon");
  if (!(ag.adam.learning_rate > 0.0) || !(ag.adam.beta1 >= 0.0 && ag.adam.beta1 < 1.0) ||
      !(ag.adam.beta2 >= 0.0 && ag.adam.beta2 < 1.0) || !(ag.adam.epsilon > 0.0)) {
    throw ConfigError("'agent.optimizer' values out of range");
  }

  TrainingConfig& tr = rc.training;
  tr.total_timesteps = non_negative("agent.training.total_timesteps");
  tr.learn_start = non_negative("agent.training.learn_start_steps");
  tr.learn_frequency = positive("agent.training.learn_frequency");
  tr.batch_size = static_cast<std::size_t>(positive("agent.training.batch_size"));
  tr.buffer_size = static_cast<std::size_t>(positive("agent.training.buffer_size"));
  if (tr.buffer_size < tr.batch_size) {
    throw ConfigError("'agent.training.buffer_size' must be >= batch_size");
  }
  tr.target_update_interval = positive("agent.training.target_update_interval");
  const std::string unit = c.get_string("agent.training.target_update_unit");
  if (unit != "env_steps" && unit != "learn_steps") {
    throw ConfigError("'agent.training.target_update_unit' must be env_steps or learn_steps");
  }
  tr.target_update_in_learn_steps = unit == "learn_steps";
  tr.eval_interval = non_negative("agent.training.eval_interval");
  tr.eval_episodes = positive("agent.training.eval_episodes");
  tr.epsilon.start = c.get_double("agent.exploration.epsilon_start");
  tr.epsilon.end = c.get_double("agent.exploration.epsilon_end");
  tr.epsilon.decay_steps = non_negative("agent.exploration.epsilon_decay_steps");
  if (!(tr.epsilon.start >= 0.0 && tr.epsilon.start <= 1.0 && tr.epsilon.end >= 0.0 &&
        tr.epsilon.end <= tr.epsilon.start)) {
    throw ConfigError("'agent.exploration' needs 0 <= epsilon_end <= epsilon_start <= 1");
  }
  tr.write_step_log = c.get_bool("training.write_step_log");

  EnvConfig& env = rc.env;
  env.action_mode = parse_action_mode(c.get_string("environment.actions.mode"));
  env.window = static_cast<std::size_t>(positive("environment.window"));
  env.initial_capital = c.get_double("environment.initial_capital");
  env.max_episode_steps = static_cast<std::size_t>(non_negative("environment.max_episode_steps"));
  env.friction.spread_pips = c.get_double("environment.friction.spread_pips");
  env.friction.slippage_pips = c.get_double("environment.friction.slippage_pips");
  env.friction.commission_per_lot = c.get_double("environment.friction.commission_per_lot");
  env.friction.pip_size = c.get_double("environment.friction.pip_size");
  env.friction.long_swap_pips_per_day = c.get_double("environment.friction.long_swap_pips_per_day");
  env.friction.short_swap_pips_per_day = c.get_double("environment.friction.short_swap_pips_per_day");
  env.friction.rollover_hour_utc = static_cast<int>(c.get_int("environment.friction.rollover_hour_utc"));
  env.risk.max_leverage = c.get_double("environment.risk.max_leverage");
  env.risk.maintenance_margin_ratio = c.get_double("environment.risk.maintenance_margin_ratio");
  env.risk.liquidation_equity_fraction = c.get_double("environment.risk.liquidation_equity_fraction");
  env.risk.depth_cap = static_cast<int>(c.get_int("environment.risk.depth_cap"));
  env.risk.base_lot = c.get_double("environment.risk.base_lot");
  env.risk.reduce_fraction = c.get_double("environment.risk.reduce_fraction");
  env.risk.allow_pyramid = c.get_bool("environment.actions.scaling.pyramid");
  env.risk.allow_martingale = c.get_bool("environment.actions.scaling.martingale");

  RewardConfig& rw = env.reward;
  for (std::size_t i = 0; i < kComponentCount; ++i) {
    const std::string base = "reward.components." + component_keys()[i];
    rw.gates[i].enabled = c.get_bool(base + ".enabled");
    rw.gates[i].weight = c.get_double(base + ".weight");
  }
  const std::string norm = c.get_string("reward_normalization.mode");
  if (norm == "clip_only") {
    rw.normalization = NormalizationMode::clip_only;
  } else if (norm == "running") {
    rw.normalization = NormalizationMode::running;
  } else {
    throw ConfigError("'reward_normalization.mode' must be clip_only or running");
  }
  rw.clip_min = c.get_double("reward_normalization.clip_min");
  rw.clip_max = c.get_double("reward_normalization.clip_max");
  rw.params.holding_max_drawdown = c.get_double("reward.params.holding_max_drawdown");
  rw.params.severe_drawdown = c.get_double("reward.params.severe_drawdown");
  rw.params.severe_multiplier = c.get_double("reward.params.severe_multiplier");
  rw.params.overtrading_window = static_cast<int>(positive("reward.params.overtrading_window"));
  rw.params.overtrading_threshold = static_cast<int>(non_negative("reward.params.overtrading_threshold"));
  rw.params.volatility_window = static_cast<int>(positive("reward.params.volatility_window"));
  rw.params.margin_threshold = c.get_double("reward.params.margin_threshold");
  if (!(rw.params.margin_threshold >= 0.0 && rw.params.margin_threshold < 1.0)) {
    throw ConfigError("'reward.params.margin_threshold' must lie in [0, 1)");
  }
  validate(env);

  DataConfig& dc = rc.data;
  dc.source = c.get_string("data.source");
  if (dc.source != "synthetic" && dc.source != "csv") {
    throw ConfigError("'data.source' must be synthetic or csv");
  }
  dc.path = c.get_string("data.path");
  if (dc.source == "csv" && dc.path.empty()) throw ConfigError("'data.path' is required for csv data");
  dc.pair = c.get_string("data.pair");
  dc.train_fraction = c.get_double("data.train_fraction");
  if (!(dc.train_fraction > 0.0 && dc.train_fraction <= 1.0)) {
    throw ConfigError("'data.train_fraction' must lie in (0, 1]");
  }
  dc.bars = static_cast<std::size_t>(positive("data.bars"));
  SyntheticSpec& ss = dc.synthetic;
  ss.regime = parse_regime(c.get_string("data.synthetic.regime"));
  ss.initial_price = c.get_double("data.synthetic.initial_price");
  if (!(ss.initial_price > 0.0)) throw ConfigError("'data.synthetic.initial_price' must be > 0");
  ss.drift = c.get_double("data.synthetic.drift");
  ss.volatility = c.get_double("data.synthetic.volatility");
  ss.slope = c.get_double("data.synthetic.slope");
  ss.noise = c.get_double("data.synthetic.noise");
  ss.reversion = c.get_double("data.synthetic.reversion");
  ss.wick = c.get_double("data.synthetic.wick");
  if (ss.volatility < 0 || ss.noise < 0 || ss.wick < 0 || ss.reversion < 0 || ss.reversion > 1) {
    throw ConfigError("'data.synthetic' stdevs must be >= 0 and reversion in [0, 1]");
  }
  const auto start = parse_iso8601(c.get_string("data.synthetic.start"));
  if (!start) throw ConfigError("'data.synthetic.start' is not an ISO-8601 timestamp");
  ss.start = *start;
  dc.features.price_change_horizon = static_cast<int>(positive("data.features.price_change_horizon"));
  dc.features.warmup = static_cast<int>(non_negative("data.features.warmup"));
  if (dc.features.warmup < kLongestLookback) {
    throw ConfigError("'data.features.warmup' must be >= " + std::to_string(kLongestLookback));
  }

  BenchmarkConfig& bc = rc.benchmark;
  bc.strategy = c.get_string("benchmark.strategy");
  bc.momentum_fast = static_cast<std::size_t>(positive("benchmark.momentum.fast_window"));
  bc.momentum_slow = static_cast<std::size_t>(positive("benchmark.momentum.slow_window"));
  if (bc.momentum_fast >= bc.momentum_slow) {
    throw ConfigError("'benchmark.momentum.fast_window' must be < slow_window");
  }
  bc.bollinger_window = static_cast<std::size_t>(positive("benchmark.mean_reversion.window"));
  bc.bollinger_k = c.get_double("benchmark.mean_reversion.num_std");
  if (!(bc.bollinger_k > 0.0)) throw ConfigError("'benchmark.mean_reversion.num_std' must be > 0");
  return rc;
}

std::vector<CorpusEntry> validate_corpus(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  std::vector<CorpusEntry> report;
  const fs::path base = root / "base.yaml";
  std::vector<fs::path> files;
  if (fs::is_directory(root)) {
    for (const auto& e : fs::recursive_directory_iterator(root)) {
      if (e.is_regular_file() && e.path().extension() == ".yaml") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (!fs::exists(base)) {
    report.push_back({base, false, "missing base.yaml", 0});
    return report;
  }
  for (const fs::path& f : files) {
    CorpusEntry entry{f, false, "", 0};
    try {
      ResolvedConfig cfg = f == base ? resolve_config_files(base) : resolve_config_files(base, {f});
      to_runtime(cfg);
      const ResolvedConfig again = resolve_config(cfg.to_yaml());
      if (again.hash() != cfg.hash()) throw ConfigError("snapshot does not round-trip to the same hash");
      entry.hash = cfg.hash();
      entry.ok = true;
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    report.push_back(entry);
  }
  return report;
}

}  // namespace fxrl
