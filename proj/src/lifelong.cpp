#include "batchens/lifelong.hpp"

#include <string>

#include "batchens/error.hpp"
#include "batchens/inference.hpp"
#include "batchens/rng.hpp"

namespace batchens {

namespace {

std::size_t eval_member(SequenceMode mode, std::size_t task) {
  return mode == SequenceMode::kMemberPerTask ? task : 0;
}

double task_accuracy(const Model& model, const Task& task, SequenceMode mode,
                     std::size_t t) {
  Matrix2D probs = member_predict(model, task.test.features,
                                  eval_member(mode, t), task.head_id);
  return accuracy(probs, task.test.labels);
}

}  // namespace

LifelongModel train_sequence(Model model, const TaskSequence& tasks,
                             const TrainConfig& config, SequenceMode mode) {
  if (tasks.empty()) throw ArgumentError("train_sequence: no tasks");
  validate_model(model);

  if (mode == SequenceMode::kMemberPerTask) {
    if (tasks.size() > model.members()) {
      throw ConfigError("sequence has " + std::to_string(tasks.size()) +
                        " tasks but the ensemble only has " +
                        std::to_string(model.members()) + " members");
    }
    for (const Layer& layer : model.trunk) {
      if (std::holds_alternative<DenseLayer>(layer)) {
        throw ConfigError(
            "member-per-task training needs an all-ensemble trunk; dense "
            "trunk parameters cannot be frozen per member");
      }
    }
  }
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].head_id >= model.heads.size()) {
      throw ConfigError("task " + std::to_string(t) + " wants head " +
                        std::to_string(tasks[t].head_id) + " but the model has " +
                        std::to_string(model.heads.size()) + " heads");
    }
  }

  LifelongModel out;
  out.mode = mode;
  out.model = std::move(model);

  for (std::size_t t = 0; t < tasks.size(); ++t) {
    TrainConfig task_config = config;
    task_config.seed = offset_seed(config.seed, t);
    if (config.shuffle_seed)
      task_config.shuffle_seed = offset_seed(*config.shuffle_seed, t);
    task_config.head = tasks[t].head_id;
    task_config.scope.only_head = static_cast<int>(tasks[t].head_id);
    if (mode == SequenceMode::kMemberPerTask) {
      task_config.pin_member = t;
      task_config.scope.only_member = static_cast<int>(t);
      task_config.scope.slow = (t == 0);
    }

    out.histories.push_back(
        train(out.model, tasks[t].train, task_config, &tasks[t].test));
    out.snapshot_accuracies.push_back(task_accuracy(out.model, tasks[t], mode, t));
  }
  return out;
}

LifelongReport evaluate_lifelong(const LifelongModel& trained,
                                 const TaskSequence& tasks) {
  if (tasks.empty()) throw ArgumentError("evaluate_lifelong: no tasks");
  if (trained.snapshot_accuracies.size() != tasks.size()) {
    throw StateError("evaluate_lifelong: " + std::to_string(tasks.size()) +
                     " tasks but " +
                     std::to_string(trained.snapshot_accuracies.size()) +
                     " snapshot accuracies; was the sequence trained?");
  }

  LifelongReport report;
  report.accuracy.reserve(tasks.size());
  report.forgetting.reserve(tasks.size());
  double acc_sum = 0.0;
  double forget_sum = 0.0;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    const double acc = task_accuracy(trained.model, tasks[t], trained.mode, t);
    report.accuracy.push_back(acc);
    report.forgetting.push_back(trained.snapshot_accuracies[t] - acc);
    acc_sum += acc;
    forget_sum += trained.snapshot_accuracies[t] - acc;
  }
  report.avg_accuracy = acc_sum / static_cast<double>(tasks.size());
  report.avg_forgetting = forget_sum / static_cast<double>(tasks.size());
  return report;
}

ParamOverhead param_overhead(const Model& model, std::size_t tasks) {
  if (tasks == 0) throw ArgumentError("param_overhead: tasks must be at least 1");
  validate_model(model);

  ParamOverhead out;
  out.total_params = model.param_count();
  for (const Layer& layer : model.trunk) {
    if (const auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      out.shared_weights += be->slow.size();
      out.per_member_params +=
          be->fast_r.size() + be->fast_s.size() + be->bias.size();
    } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
      out.shared_weights += dense->weight.size();
    }
  }
  out.overhead_fraction =
      out.shared_weights == 0
          ? 0.0
          : static_cast<double>(out.per_member_params) /
                static_cast<double>(out.shared_weights);
  out.naive_copy_overhead = static_cast<double>(tasks - 1);
  return out;
}

}  // namespace batchens
