#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fxrl/rng.hpp"
#include "fxrl/time.hpp"

namespace fxrl {

// One hourly OHLCV record. Prices are quote currency per base unit.
struct Bar {
  UtcTime timestamp;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
};

bool ohlc_consistent(const Bar& b);

// ---------------------------------------------------------------------------
// CSV ingestion. Header: timestamp,open,high,low,close,volume

// Empty numeric fields are read as missing (NaN) and resolved by fill_missing;
// anything else that fails to parse is a DataError naming the line.
std::vector<Bar> parse_ohlcv(std::istream& in, const std::string& source_name = "<stream>");
std::vector<Bar> load_ohlcv(const std::filesystem::path& path, const std::string& pair);
void write_ohlcv(std::ostream& out, const std::vector<Bar>& bars);

// Input must be sorted (stable) by timestamp; for repeated timestamps the last
// occurrence in original order wins.
std::vector<Bar> dedup_last(const std::vector<Bar>& bars);

// Forward-fills missing fields from the previous bar, widens high/low to cover
// open/close, and drops leading bars that cannot be filled.
std::vector<Bar> fill_missing(const std::vector<Bar>& bars);

// ---------------------------------------------------------------------------
// Features

struct FeatureRow {
  UtcTime timestamp;
  std::vector<double> values;
};

struct FeatureSpec {
  int price_change_horizon = 1;
  // Bars consumed by indicator initialisation: longest lookback (50) plus the
  // observation window (24). Rows for these bars are never emitted.
  int warmup = 74;
};

inline constexpr int kLongestLookback = 50;
inline constexpr std::size_t kFeatureCount = 19;

// Canonical order: technical block then microstructure block.
const std::vector<std::string>& feature_names();

// Session label from UTC hour: 0 Asia [22,7), 1 London [7,13), 2 New York
// [13,21), 3 otherwise.
int session_label(int utc_hour);

// Rows for bars[spec.warmup], bars[spec.warmup + 1], ...; every value at bar t
// is computed from bars[0..t] only.
std::vector<FeatureRow> compute_features(const std::vector<Bar>& bars, const FeatureSpec& spec = {});

// ---------------------------------------------------------------------------
// Scaling (population moments, floored stdev)

inline constexpr double kScalerStdevFloor = 1e-8;

struct ScalerParams {
  std::vector<double> mean;
  std::vector<double> stdev;

  std::size_t width() const { return mean.size(); }
  bool operator==(const ScalerParams&) const = default;
};

ScalerParams fit_scaler(const std::vector<FeatureRow>& train_rows);
std::vector<FeatureRow> apply_scaler(const std::vector<FeatureRow>& rows, const ScalerParams& params);
std::vector<FeatureRow> unscale(const std::vector<FeatureRow>& rows, const ScalerParams& params);

void write_scaler(std::ostream& out, const ScalerParams& params,
                  const std::vector<std::string>& names = feature_names());
void write_features_csv(std::ostream& out, const std::vector<FeatureRow>& rows,
                        const std::vector<std::string>& names = feature_names());

// ---------------------------------------------------------------------------
// Splits and the assembled market slices the environment consumes.

// Bars aligned one-to-one with (scaled) feature rows.
struct MarketSlice {
  std::vector<Bar> bars;
  std::vector<FeatureRow> features;

  std::size_t size() const { return bars.size(); }
  bool empty() const { return bars.empty(); }
};

struct DatasetSplit {
  MarketSlice train;
  MarketSlice heldout;
  std::size_t split_index = 0;
};

// Bars only; features are attached by prepare_dataset.
DatasetSplit chronological_split(const std::vector<Bar>& bars, double train_fraction);

struct PreparedData {
  DatasetSplit split;
  ScalerParams scaler;
};

// Feature engineering with the warm-up prefix taken from the start of the
// train slice; heldout features use the tail of train as past context. The
// scaler is fitted on train rows only unless `fit_on_all_rows` (a test hook
// that deliberately breaks that guarantee).
PreparedData prepare_dataset(const std::vector<Bar>& bars, double train_fraction,
                             const FeatureSpec& spec = {}, bool fit_on_all_rows = false);

// Same as prepare_dataset but reuses frozen scaler params.
PreparedData prepare_dataset_with_scaler(const std::vector<Bar>& bars, double train_fraction,
                                         const FeatureSpec& spec, const ScalerParams& scaler);

// ---------------------------------------------------------------------------
// Synthetic data

enum class Regime { random_walk, trend, mean_reverting };

Regime parse_regime(const std::string& name);
std::string to_string(Regime r);

struct SyntheticSpec {
  Regime regime = Regime::trend;
  double initial_price = 1.10;
  // random_walk: per-bar log-return mean/stdev.
  double drift = 0.0;
  double volatility = 0.0008;
  // trend: log-price slope per bar and iid log-noise stdev around the trend.
  double slope = 5e-5;
  double noise = 0.0008;
  // mean_reverting: OU pull per bar toward log(initial_price).
  double reversion = 0.02;
  // Relative wick size for high/low beyond the open-close body.
  double wick = 0.0003;
  UtcTime start = make_utc(2022, 1, 3);
};

// Hourly timestamps skipping Saturday and Sunday. Deterministic in (spec, n, seed).
std::vector<Bar> generate_synthetic(const SyntheticSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace fxrl
