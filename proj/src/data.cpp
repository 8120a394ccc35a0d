#include "fxrl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "fxrl/error.hpp"

namespace fxrl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

bool parse_number(std::string_view field, double& out) {
  if (field.empty()) {
    out = kNaN;
    return true;
  }
  if (field.front() == '+') field.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc{} && ptr == field.data() + field.size() && std::isfinite(out);
}

bool any_missing(const Bar& b) {
  return std::isnan(b.open) || std::isnan(b.high) || std::isnan(b.low) || std::isnan(b.close) ||
         std::isnan(b.volume);
}

std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double window_mean(const std::vector<double>& x, std::size_t end, std::size_t len) {
  double sum = 0.0;
  for (std::size_t i = end + 1 - len; i <= end; ++i) sum += x[i];
  return sum / static_cast<double>(len);
}

double window_pop_stdev(const std::vector<double>& x, std::size_t end, std::size_t len) {
  const double m = window_mean(x, end, len);
  double ss = 0.0;
  for (std::size_t i = end + 1 - len; i <= end; ++i) ss += (x[i] - m) * (x[i] - m);
  return std::sqrt(ss / static_cast<double>(len));
}

std::vector<double> ema_series(const std::vector<double>& x, int period) {
  std::vector<double> e(x.size());
  const double alpha = 2.0 / (period + 1.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    e[t] = t == 0 ? x[0] : alpha * x[t] + (1.0 - alpha) * e[t - 1];
  }
  return e;
}

// Wilder-smoothed RSI; seed is the plain mean of the first `period` changes.
std::vector<double> rsi_series(const std::vector<double>& c, int period) {
  const auto p = static_cast<std::size_t>(period);
  std::vector<double> rsi(c.size(), 50.0);
  double avg_gain = 0.0;
  double avg_loss = 0.0;
  for (std::size_t t = 1; t < c.size(); ++t) {
    const double d = c[t] - c[t - 1];
    const double gain = d > 0.0 ? d : 0.0;
    const double loss = d < 0.0 ? -d : 0.0;
    if (t <= p) {
      avg_gain += gain / static_cast<double>(p);
      avg_loss += loss / static_cast<double>(p);
      if (t < p) continue;
    } else {
      avg_gain = (avg_gain * (period - 1) + gain) / period;
      avg_loss = (avg_loss * (period - 1) + loss) / period;
    }
    if (avg_gain == 0.0 && avg_loss == 0.0) {
      rsi[t] = 50.0;
    } else if (avg_loss == 0.0) {
      rsi[t] = 100.0;
    } else {
      rsi[t] = 100.0 - 100.0 / (1.0 + avg_gain / avg_loss);
    }
  }
  return rsi;
}

}  // namespace

bool ohlc_consistent(const Bar& b) {
  return b.low <= std::min(b.open, b.close) && b.high >= std::max(b.open, b.close) &&
         b.low <= b.high;
}

std::vector<Bar> parse_ohlcv(std::istream& in, const std::string& source_name) {
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::vector<Bar> bars;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != "timestamp,open,high,low,close,volume") {
        throw DataError(source_name + ":" + std::to_string(line_no) +
                        ": expected header 'timestamp,open,high,low,close,volume'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_commas(view);
    const std::string where = source_name + ":" + std::to_string(line_no) + ": ";
    if (fields.size() != 6) {
      throw DataError(where + "expected 6 fields, got " + std::to_string(fields.size()));
    }
    const auto ts = parse_iso8601(fields[0]);
    if (!ts) throw DataError(where + "unparseable timestamp '" + std::string(fields[0]) + "'");
    if (ts->seconds % 3600 != 0) {
      throw DataError(where + "timestamp not on an hour boundary");
    }
    Bar b;
    b.timestamp = *ts;
    double* targets[] = {&b.open, &b.high, &b.low, &b.close, &b.volume};
    static constexpr const char* kNames[] = {"open", "high", "low", "close", "volume"};
    for (int i = 0; i < 5; ++i) {
      if (!parse_number(fields[static_cast<std::size_t>(i) + 1], *targets[i])) {
        throw DataError(where + "malformed " + kNames[i] + " '" +
                        std::string(fields[static_cast<std::size_t>(i) + 1]) + "'");
      }
    }
    for (int i = 0; i < 4; ++i) {
      if (!std::isnan(*targets[i]) && *targets[i] <= 0.0) {
        throw DataError(where + "non-positive " + kNames[i]);
      }
    }
    if (!std::isnan(b.volume) && b.volume < 0.0) throw DataError(where + "negative volume");
    if (!any_missing(b) && !ohlc_consistent(b)) {
      throw DataError(where + "OHLC invariant violated (need low <= min(open,close) and high >= "
                              "max(open,close))");
    }
    bars.push_back(b);
  }
  if (bars.empty()) throw DataError(source_name + ": empty input");
  std::stable_sort(bars.begin(), bars.end(),
                   [](const Bar& a, const Bar& b) { return a.timestamp < b.timestamp; });
  return bars;
}

std::vector<Bar> load_ohlcv(const std::filesystem::path& path, const std::string& pair) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string() + " for pair " + pair);
  return parse_ohlcv(in, path.string());
}

void write_ohlcv(std::ostream& out, const std::vector<Bar>& bars) {
  out << "timestamp,open,high,low,close,volume\n";
  for (const Bar& b : bars) {
    out << format_iso8601(b.timestamp) << ',' << fmt_num(b.open) << ',' << fmt_num(b.high) << ','
        << fmt_num(b.low) << ',' << fmt_num(b.close) << ',' << fmt_num(b.volume) << '\n';
  }
}

std::vector<Bar> dedup_last(const std::vector<Bar>& bars) {
  std::vector<Bar> out;
  out.reserve(bars.size());
  for (const Bar& b : bars) {
    if (!out.empty() && out.back().timestamp == b.timestamp) {
      out.back() = b;
    } else {
      out.push_back(b);
    }
  }
  return out;
}

std::vector<Bar> fill_missing(const std::vector<Bar>& bars) {
  std::vector<Bar> out;
  out.reserve(bars.size());
  for (Bar b : bars) {
    if (any_missing(b)) {
      if (out.empty()) continue;
      const Bar& prev = out.back();
      if (std::isnan(b.open)) b.open = prev.close;
      if (std::isnan(b.close)) b.close = prev.close;
      if (std::isnan(b.high)) b.high = std::max(b.open, b.close);
      if (std::isnan(b.low)) b.low = std::min(b.open, b.close);
      if (std::isnan(b.volume)) b.volume = prev.volume;
      b.high = std::max({b.high, b.open, b.close});
      b.low = std::min({b.low, b.open, b.close});
    }
    out.push_back(b);
  }
  return out;
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> kNames = {
      // technical
      "tech.sma_10", "tech.sma_20", "tech.sma_50", "tech.ema_10", "tech.ema_20", "tech.ema_50",
      "tech.rsi_14", "tech.macd_line", "tech.macd_signal", "tech.macd_hist", "tech.bb_mid",
      "tech.bb_upper", "tech.bb_lower", "tech.log_return", "tech.rolling_vol_20",
      // microstructure
      "micro.spread_proxy", "micro.price_change", "micro.realized_vol_20", "micro.session"};
  return kNames;
}

int session_label(int h) {
  if (h >= 22 || h < 7) return 0;
  if (h < 13) return 1;
  if (h < 21) return 2;
  return 3;
}

std::vector<FeatureRow> compute_features(const std::vector<Bar>& bars, const FeatureSpec& spec) {
  if (spec.warmup < kLongestLookback) {
    throw ConfigError("feature warm-up must be >= " + std::to_string(kLongestLookback));
  }
  if (spec.price_change_horizon < 1 || spec.price_change_horizon >= spec.warmup) {
    throw ConfigError("price_change_horizon must lie in [1, warmup)");
  }
  const std::size_t n = bars.size();
  const auto warmup = static_cast<std::size_t>(spec.warmup);
  if (n <= warmup) {
    throw DataError("insufficient data for features: " + std::to_string(n) +
                    " bars, warm-up needs more than " + std::to_string(warmup));
  }
  std::vector<double> close(n);
  std::vector<double> log_ret(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    close[t] = bars[t].close;
    if (t > 0) log_ret[t] = std::log(close[t] / close[t - 1]);
  }
  const auto ema10 = ema_series(close, 10);
  const auto ema20 = ema_series(close, 20);
  const auto ema50 = ema_series(close, 50);
  const auto ema12 = ema_series(close, 12);
  const auto ema26 = ema_series(close, 26);
  std::vector<double> macd(n);
  for (std::size_t t = 0; t < n; ++t) macd[t] = ema12[t] - ema26[t];
  const auto signal = ema_series(macd, 9);
  const auto rsi = rsi_series(close, 14);
  const auto h = static_cast<std::size_t>(spec.price_change_horizon);

  std::vector<FeatureRow> rows;
  rows.reserve(n - warmup);
  for (std::size_t t = warmup; t < n; ++t) {
    const Bar& b = bars[t];
    const double bb_mid = window_mean(close, t, 20);
    const double bb_sd = window_pop_stdev(close, t, 20);
    double rss = 0.0;
    for (std::size_t i = t - 19; i <= t; ++i) rss += log_ret[i] * log_ret[i];
    FeatureRow row;
    row.timestamp = b.timestamp;
    row.values = {
        window_mean(close, t, 10),
        bb_mid,
        window_mean(close, t, 50),
        ema10[t],
        ema20[t],
        ema50[t],
        rsi[t],
        macd[t],
        signal[t],
        macd[t] - signal[t],
        bb_mid,
        bb_mid + 2.0 * bb_sd,
        bb_mid - 2.0 * bb_sd,
        log_ret[t],
        window_pop_stdev(log_ret, t, 20),
        (b.high - b.low) / b.close,
        (close[t] - close[t - h]) / close[t - h],
        std::sqrt(rss),
        session_label(hour_of(b.timestamp)) / 3.0,
    };
    rows.push_back(std::move(row));
  }
  return rows;
}

ScalerParams fit_scaler(const std::vector<FeatureRow>& rows) {
  if (rows.size() < 2) throw DataError("insufficient data to fit scaler (need >= 2 rows)");
  const std::size_t w = rows.front().values.size();
  ScalerParams p;
  p.mean.assign(w, 0.0);
  p.stdev.assign(w, 0.0);
  for (const auto& r : rows) {
    if (r.values.size() != w) throw DataError("ragged feature rows");
    for (std::size_t j = 0; j < w; ++j) p.mean[j] += r.values[j];
  }
  const auto n = static_cast<double>(rows.size());
  for (double& m : p.mean) m /= n;
  for (const auto& r : rows) {
    for (std::size_t j = 0; j < w; ++j) {
      const double d = r.values[j] - p.mean[j];
      p.stdev[j] += d * d;
    }
  }
  for (double& s : p.stdev) s = std::max(std::sqrt(s / n), kScalerStdevFloor);
  return p;
}

std::vector<FeatureRow> apply_scaler(const std::vector<FeatureRow>& rows, const ScalerParams& p) {
  std::vector<FeatureRow> out(rows);
  for (auto& r : out) {
    if (r.values.size() != p.width()) {
      throw DataError("scaler width " + std::to_string(p.width()) + " != row width " +
                      std::to_string(r.values.size()));
    }
    for (std::size_t j = 0; j < r.values.size(); ++j) {
      r.values[j] = (r.values[j] - p.mean[j]) / p.stdev[j];
    }
  }
  return out;
}

std::vector<FeatureRow> unscale(const std::vector<FeatureRow>& rows, const ScalerParams& p) {
  std::vector<FeatureRow> out(rows);
  for (auto& r : out) {
    if (r.values.size() != p.width()) throw DataError("scaler width mismatch");
    for (std::size_t j = 0; j < r.values.size(); ++j) {
      r.values[j] = r.values[j] * p.stdev[j] + p.mean[j];
    }
  }
  return out;
}

void write_scaler(std::ostream& out, const ScalerParams& p, const std::vector<std::string>& names) {
  for (std::size_t j = 0; j < p.width(); ++j) {
    const std::string name = j < names.size() ? names[j] : "f" + std::to_string(j);
    out << name << ".mean=" << fmt_num(p.mean[j]) << '\n';
    out << name << ".stdev=" << fmt_num(p.stdev[j]) << '\n';
  }
}

void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows,
                        const std::vector<std::string>& names) {
  out << "timestamp";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& r : rows) {
    out << format_iso8601(r.timestamp);
    for (double v : r.values) out << ',' << fmt_num(v);
    out << '\n';
  }
}

DatasetSplit chronological_split(const std::vector<Bar>& bars, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1]");
  }
  if (bars.size() < 2) throw DataError("chronological_split needs at least 2 bars");
  DatasetSplit s;
  s.split_index = static_cast<std::size_t>(
      std::floor(static_cast<double>(bars.size()) * train_fraction));
  s.train.bars.assign(bars.begin(), bars.begin() + static_cast<std::ptrdiff_t>(s.split_index));
  s.heldout.bars.assign(bars.begin() + static_cast<std::ptrdiff_t>(s.split_index), bars.end());
  return s;
}

namespace {

struct EngineeredSplit {
  DatasetSplit split;
  std::vector<FeatureRow> train_raw;
  std::vector<FeatureRow> heldout_raw;
};

EngineeredSplit engineer(const std::vector<Bar>& bars, double train_fraction,
                         const FeatureSpec& spec) {
  DatasetSplit raw = chronological_split(bars, train_fraction);
  const auto warmup = static_cast<std::size_t>(spec.warmup);
  if (raw.split_index <= warmup + 1) {
    throw DataError("train slice too short for the feature warm-up");
  }
  // Features are causal, so computing them over the whole series yields the
  // same train rows as computing over the train slice alone.
  const auto rows = compute_features(bars, spec);
  EngineeredSplit out;
  out.split.split_index = raw.split_index;
  for (std::size_t t = warmup; t < bars.size(); ++t) {
    const FeatureRow& row = rows[t - warmup];
    if (t < raw.split_index) {
      out.split.train.bars.push_back(bars[t]);
      out.train_raw.push_back(row);
    } else {
      out.split.heldout.bars.push_back(bars[t]);
      out.heldout_raw.push_back(row);
    }
  }
  return out;
}

}  // namespace

PreparedData prepare_dataset(const std::vector<Bar>& bars, double train_fraction,
                             const FeatureSpec& spec, bool fit_on_all_rows) {
  EngineeredSplit e = engineer(bars, train_fraction, spec);
  ScalerParams scaler;
  if (fit_on_all_rows) {
    std::vector<FeatureRow> all = e.train_raw;
    all.insert(all.end(), e.heldout_raw.begin(), e.heldout_raw.end());
    scaler = fit_scaler(all);
  } else {
    scaler = fit_scaler(e.train_raw);
  }
  e.split.train.features = apply_scaler(e.train_raw, scaler);
  e.split.heldout.features = apply_scaler(e.heldout_raw, scaler);
  return PreparedData{std::move(e.split), std::move(scaler)};
}

PreparedData prepare_dataset_with_scaler(const std::vector<Bar>& bars, double train_fraction,
                                         const FeatureSpec& spec, const ScalerParams& scaler) {
  EngineeredSplit e = engineer(bars, train_fraction, spec);
  e.split.train.features = apply_scaler(e.train_raw, scaler);
  e.split.heldout.features = apply_scaler(e.heldout_raw, scaler);
  return PreparedData{std::move(e.split), scaler};
}

Regime parse_regime(const std::string& name) {
  if (name == "random_walk" || name == "gbm") return Regime::random_walk;
  if (name == "trend") return Regime::trend;
  if (name == "mean_reverting" || name == "mean_revert") return Regime::mean_reverting;
  throw ConfigError("unknown synthetic regime '" + name + "'");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::random_walk: return "random_walk";
    case Regime::trend: return "trend";
    case Regime::mean_reverting: return "mean_reverting";
  }
  return "?";
}

std::vector<Bar> generate_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed) {
  if (!(spec.initial_price > 0.0) || spec.volatility < 0.0 || spec.noise < 0.0 ||
      spec.wick < 0.0) {
    throw ConfigError("synthetic data: prices must be positive and scales non-negative");
  }
  Rng rng(seed);
  std::vector<Bar> bars;
  bars.reserve(n);
  const double log_p0 = std::log(spec.initial_price);
  double log_p = log_p0;
  double prev_close = spec.initial_price;
  UtcTime ts = spec.start;
  for (std::size_t i = 0; i < n; ++i) {
    while (weekday_of(ts) == Weekday::saturday || weekday_of(ts) == Weekday::sunday) {
      ts = ts.plus_hours(1);
    }
    const double z = standard_normal(rng);
    const double zh = standard_normal(rng);
    const double zl = standard_normal(rng);
    const double zv = standard_normal(rng);
    switch (spec.regime) {
      case Regime::random_walk:
        log_p += spec.drift + spec.volatility * z;
        break;
      case Regime::trend:
        log_p = log_p0 + spec.slope * static_cast<double>(i + 1) + spec.noise * z;
        break;
      case Regime::mean_reverting:
        log_p += spec.reversion * (log_p0 - log_p) + spec.volatility * z;
        break;
    }
    Bar b;
    b.timestamp = ts;
    b.open = prev_close;
    b.close = std::exp(log_p);
    b.high = std::max(b.open, b.close) * (1.0 + spec.wick * std::fabs(zh));
    b.low = std::min(b.open, b.close) * (1.0 - spec.wick * std::fabs(zl));
    b.volume = 1000.0 * (1.0 + std::fabs(zv));
    bars.push_back(b);
    prev_close = b.close;
    ts = ts.plus_hours(1);
  }
  return bars;
}

}  // namespace fxrl
