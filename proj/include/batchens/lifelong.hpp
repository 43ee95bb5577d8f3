#pragma once

#include <cstddef>
#include <vector>

#include "batchens/data.hpp"
#include "batchens/model.hpp"
#include "batchens/training.hpp"

namespace batchens {

enum class SequenceMode {
  // Task t trains only member t's fast weights/bias rows and head t;
  // task 0 additionally trains the shared weights. Everything a finished
  // task owns stays bit-identical afterwards.
  kMemberPerTask,
  // Every task fine-tunes the whole trunk plus its own head (the
  // catastrophic-forgetting baseline).
  kFineTuneAll,
};

struct LifelongModel {
  Model model;
  SequenceMode mode = SequenceMode::kMemberPerTask;
  // Task t's test accuracy measured immediately after task t trained.
  std::vector<double> snapshot_accuracies;
  std::vector<TrainResult> histories;  // one per task
};

// Trains the tasks in order. Task t uses head tasks[t].head_id, derives its
// seed as offset_seed(config.seed, t), and starts a fresh optimizer.
// kMemberPerTask requires an all-ensemble trunk (dense trunk parameters
// cannot be frozen per member) and ensemble size ≥ task count; violations
// raise ConfigError. Empty task list raises ArgumentError.
LifelongModel train_sequence(Model model, const TaskSequence& tasks,
                             const TrainConfig& config,
                             SequenceMode mode = SequenceMode::kMemberPerTask);

struct LifelongReport {
  std::vector<double> accuracy;    // task t's test accuracy at the end
  std::vector<double> forgetting;  // snapshot[t] − accuracy[t]
  double avg_accuracy = 0.0;
  double avg_forgetting = 0.0;
};

// Re-evaluates every task at the end of the sequence, selecting member t
// (kMemberPerTask) or the plain trunk (kFineTuneAll) and head tasks[t].head_id.
// Missing or mismatched snapshots raise StateError.
LifelongReport evaluate_lifelong(const LifelongModel& trained,
                                 const TaskSequence& tasks);

struct ParamOverhead {
  std::size_t total_params = 0;       // trunk + every head
  std::size_t shared_weights = 0;     // trunk weight entries shared by members
  std::size_t per_member_params = 0;  // Σ over ensemble layers of M·(m+2n)
  // per_member_params / shared_weights: the relative cost of adding the
  // rank-1 modulations, head parameters excluded.
  double overhead_fraction = 0.0;
  // What duplicating the whole network per task would cost instead.
  double naive_copy_overhead = 0.0;  // (tasks − 1) · 100%
};

// Exact integer parameter accounting. tasks ≥ 1 or ArgumentError.
ParamOverhead param_overhead(const Model& model, std::size_t tasks);

}  // namespace batchens
