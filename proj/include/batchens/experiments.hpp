#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "batchens/config.hpp"

namespace batchens {

// Variants every comparison-style command understands.
enum class Variant {
  kSingle,         // one dense network
  kBatchEnsemble,  // shared weights + per-member rank-1 modulations
  kMcDropout,      // one dense network, dropout sampled at test time
  kNaiveEnsemble,  // M independently trained dense networks
  kNaiveSmall,     // M independent networks shrunk to the ensemble's budget
};

Variant parse_variant(const std::string& name);  // ConfigError on unknown names
std::string variant_name(Variant v);

// Every runner is a pure function of (config, seeds, out_dir): identical
// inputs rewrite identical bytes. Returned paths list everything written.

struct TrainOutputs {
  std::vector<std::string> checkpoint_paths;  // one per seed
  std::vector<std::string> history_paths;     // one per seed
};
TrainOutputs run_train(const ConfigFile& config,
                       const std::vector<std::uint64_t>& seeds,
                       const std::string& out_dir);

struct CompareRow {
  std::string variant;
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double ece = 0.0;
  double mean_entropy = 0.0;
};
struct CompareOutputs {
  std::vector<CompareRow> rows;  // CSV row order: variants × seeds
  std::string csv_path;
  std::vector<std::string> checkpoint_paths;  // consumed later by `corrupt`
};
CompareOutputs run_compare(const ConfigFile& config,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir);

struct LifelongRow {
  std::string method;  // batch_ensemble | vanilla
  std::uint64_t seed = 0;
  std::size_t task = 0;
  double acc_after = 0.0;
  double acc_final = 0.0;
  double forgetting = 0.0;
};
struct LifelongOutputs {
  std::vector<LifelongRow> rows;
  std::string csv_path;
};
LifelongOutputs run_lifelong(const ConfigFile& config,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& out_dir);

struct DiversityRow {
  double fraction = 1.0;
  std::string method;
  std::uint64_t seed = 0;
  std::size_t member = 0;
  double accuracy = 0.0;
  double raw_d = 0.0;
  double normalized_d = 0.0;
};
struct DiversityOutputs {
  std::vector<DiversityRow> rows;
  std::string csv_path;
  std::string predictions_path;  // per-member predicted labels, for re-aggregation
};
DiversityOutputs run_diversity(const ConfigFile& config,
                               const std::vector<std::uint64_t>& seeds,
                               const std::string& out_dir);

struct CorruptionRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::size_t level = 0;  // 0 = clean baseline
  double accuracy = 0.0;
  double ece = 0.0;
};
struct CorruptionOutputs {
  std::vector<CorruptionRow> rows;
  std::string csv_path;
};
// Evaluates checkpoints written by run_compare (StateError when absent).
CorruptionOutputs run_corruption(const ConfigFile& config,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::string& out_dir);

struct GradcheckResult {
  std::size_t instances = 0;
  // Worst fraction of the allowed tolerance consumed by any gradient entry,
  // where an entry passes when |analytic − fd| ≤ max(1e-6·scale, 1e-8).
  // ≤ 1 means every entry of every instance matched central differences.
  double worst_ratio = 0.0;
};
GradcheckResult run_gradcheck(const ConfigFile& config, std::uint64_t seed);

}  // namespace batchens
