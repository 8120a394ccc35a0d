#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "fxrl/env.hpp"

namespace fxrl {

struct TestResult {
  std::string name;
  bool pass = false;
  std::string evidence;
};

struct ConformanceReport {
  std::vector<TestResult> tests;
  bool all_pass() const;
};

struct VerifyOptions {
  std::uint64_t seed = 20240101;
  int probes = 64;
  // Deliberately broken guard, for sensitivity runs.
  CausalityFault fault = CausalityFault::none;
  // Scaler fitted on train + heldout rows.
  bool scaler_leak = false;
};

// Every conformance test constructs its environments here.
std::unique_ptr<Environment> make_conformance_env(const EnvConfig& cfg,
                                                  std::shared_ptr<const MarketSlice> data);

TestResult test_feature_staleness(const VerifyOptions& opt = {});
TestResult test_fill_price_rule(const VerifyOptions& opt = {});
TestResult test_reward_timing(const VerifyOptions& opt = {});
TestResult test_scaler_leakage(const VerifyOptions& opt = {});
TestResult test_mask_timing(const VerifyOptions& opt = {});

ConformanceReport run_conformance(const VerifyOptions& opt = {});

// Each test rerun with the guard it checks broken; `pass` here means the
// test detected the break (i.e. the underlying test failed).
ConformanceReport run_sensitivity(const VerifyOptions& opt = {});

std::string format_report(const ConformanceReport& r);

}  // namespace fxrl
