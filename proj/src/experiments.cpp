#include "batchens/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <variant>

#include "batchens/checkpoint.hpp"
#include "batchens/csv.hpp"
#include "batchens/data.hpp"
#include "batchens/error.hpp"
#include "batchens/inference.hpp"
#include "batchens/lifelong.hpp"
#include "batchens/metrics.hpp"
#include "batchens/model.hpp"
#include "batchens/rng.hpp"
#include "batchens/training.hpp"

namespace batchens {

namespace {

namespace fs = std::filesystem;

// ---- config assembly ----------------------------------------------------------

struct ExperimentData {
  Dataset train;
  Dataset test;
  std::uint64_t data_seed = 0;
};

// Blobs are min-max normalized into [0,1] (fitted on train) so the corruption
// pipeline's precondition holds for every command that shares the config.
// IDX pixels already live in [0,1] and load as-is.
ExperimentData load_data(const ConfigFile& config) {
  ExperimentData out;
  out.data_seed = cfg_u64(config, "data", "seed", 9);
  const std::string kind = cfg_string(config, "data", "kind", "blobs");
  if (kind == "blobs") {
    BlobsPair pair = gen_blobs_pair(cfg_u64(config, "data", "classes", 10),
                                    cfg_u64(config, "data", "train_per_class", 100),
                                    cfg_u64(config, "data", "test_per_class", 50),
                                    cfg_u64(config, "data", "dim", 16),
                                    cfg_double(config, "data", "spread", 1.0),
                                    out.data_seed);
    Normalizer norm = fit_normalizer(pair.train);
    out.train = apply_normalizer(norm, pair.train);
    out.test = apply_normalizer(norm, pair.test);
  } else if (kind == "idx") {
    out.train = load_idx(cfg_string(config, "data", "train_images"),
                         cfg_string(config, "data", "train_labels"));
    out.test = load_idx(cfg_string(config, "data", "test_images"),
                        cfg_string(config, "data", "test_labels"));
  } else {
    throw ConfigError("'data.kind': expected blobs or idx, got '" + kind + "'");
  }
  return out;
}

std::vector<std::size_t> hidden_widths(const ConfigFile& config) {
  std::vector<std::uint64_t> raw = cfg_u64_list(config, "model", "hidden", {32, 32});
  if (raw.empty()) throw ConfigError("'model.hidden': needs at least one width");
  std::vector<std::size_t> out;
  for (std::uint64_t w : raw) {
    if (w == 0) throw ConfigError("'model.hidden': widths must be positive");
    out.push_back(static_cast<std::size_t>(w));
  }
  return out;
}

TrainConfig base_train_config(const ConfigFile& config) {
  TrainConfig tc;
  tc.batch_size = cfg_u64(config, "train", "batch_size", 64);
  tc.epochs = cfg_u64(config, "train", "epochs", 10);
  tc.base_lr = cfg_double(config, "train", "lr", 0.1);
  tc.lr_milestones = cfg_double_list(config, "train", "lr_milestones", {0.5, 0.75});
  tc.lr_factor = cfg_double(config, "train", "lr_factor", 0.1);
  tc.weight_decay = cfg_double(config, "train", "weight_decay", 1e-4);
  const std::string mode = cfg_string(config, "train", "decay_mode", "shared_only");
  if (mode == "shared_only") {
    tc.decay_mode = DecayMode::kSharedOnly;
  } else if (mode == "mean_weight") {
    tc.decay_mode = DecayMode::kMeanWeight;
  } else {
    throw ConfigError("'train.decay_mode': expected shared_only or mean_weight, got '" +
                      mode + "'");
  }
  tc.momentum = cfg_double(config, "train", "momentum", 0.9);
  tc.extra_iteration_factor =
      cfg_double(config, "train", "extra_iteration_factor", 1.5);
  return tc;
}

ModelSpec base_spec(const ConfigFile& config, const ExperimentData& data) {
  ModelSpec spec;
  spec.in_dim = data.train.dim();
  spec.hidden = hidden_widths(config);
  spec.classes = data.train.classes;
  spec.members = cfg_u64(config, "model", "members", 4);
  spec.dropout_rate = cfg_double(config, "model", "dropout", 0.0);
  return spec;
}

Model build_seeded(const ModelSpec& spec, std::uint64_t seed) {
  SeededRng init_rng = SeededRng(seed).split(streams::kParamInit);
  return build_model(spec, init_rng);
}

std::string out_path(const std::string& out_dir, const std::string& name) {
  fs::create_directories(out_dir);
  return (fs::path(out_dir) / name).string();
}

// ---- variant plumbing ----------------------------------------------------------

struct VariantSpec {
  Variant kind;
  ModelSpec model;           // per-member architecture
  std::size_t copies = 1;    // independent models (naive variants)
  std::size_t mc_samples = 0;  // >0 only for mc_dropout
  std::size_t epochs = 0;
};

std::size_t scaled_epochs(std::size_t epochs, double factor) {
  return static_cast<std::size_t>(
      std::ceil(static_cast<double>(epochs) * factor));
}

// Largest uniform shrink of the hidden widths for which `copies` independent
// models stay within the ensemble's total parameter budget.
std::vector<std::size_t> shrink_widths(const ModelSpec& dense_spec,
                                       std::size_t copies,
                                       std::size_t budget) {
  auto params_at = [&](double alpha) {
    ModelSpec spec = dense_spec;
    for (std::size_t& w : spec.hidden)
      w = std::max<std::size_t>(1, static_cast<std::size_t>(
                                       std::floor(alpha * static_cast<double>(w))));
    std::size_t count = 0;
    std::size_t dim = spec.in_dim;
    for (std::size_t w : spec.hidden) {
      count += dim * w + w;
      dim = w;
    }
    count += dim * spec.classes + spec.classes;
    return std::pair<std::size_t, ModelSpec>(count * copies, spec);
  };

  // Parameter count is monotone in alpha; walk a fixed grid from above.
  for (int k = 1000; k >= 1; --k) {
    auto [count, spec] = params_at(static_cast<double>(k) / 1000.0);
    if (count <= budget) return spec.hidden;
  }
  return params_at(1.0 / 1000.0).second.hidden;  // floor of one unit per layer
}

VariantSpec make_variant(Variant kind, const ConfigFile& config,
                         const ExperimentData& data, const TrainConfig& tc,
                         std::size_t mc_samples) {
  VariantSpec out;
  out.kind = kind;
  out.model = base_spec(config, data);
  out.epochs = tc.epochs;
  const std::size_t members = out.model.members;
  if (members == 0) {
    throw ConfigError("'model.members': ensemble variants need at least 1 member");
  }

  switch (kind) {
    case Variant::kSingle:
      out.model.members = 0;
      out.model.dropout_rate = 0.0;
      break;
    case Variant::kBatchEnsemble:
      out.model.dropout_rate = 0.0;
      out.epochs = scaled_epochs(tc.epochs, tc.extra_iteration_factor);
      break;
    case Variant::kMcDropout: {
      out.model.members = 0;
      if (out.model.dropout_rate <= 0.0) {
        throw ConfigError(
            "'model.dropout': the mc_dropout variant needs a positive rate");
      }
      out.mc_samples = mc_samples;
      break;
    }
    case Variant::kNaiveEnsemble:
      out.model.members = 0;
      out.model.dropout_rate = 0.0;
      out.copies = members;
      break;
    case Variant::kNaiveSmall: {
      ModelSpec be = base_spec(config, data);
      be.dropout_rate = 0.0;
      const std::size_t budget = build_seeded(be, 0).param_count();
      out.model.members = 0;
      out.model.dropout_rate = 0.0;
      out.copies = members;
      out.model.hidden = shrink_widths(out.model, members, budget);
      break;
    }
  }
  return out;
}

// One trained cell: either a single model or `copies` independent ones.
struct TrainedVariant {
  std::vector<Model> models;
  VariantSpec spec;
};

TrainedVariant train_variant(const VariantSpec& vs, const ExperimentData& data,
                             const TrainConfig& tc, std::uint64_t seed) {
  TrainedVariant out;
  out.spec = vs;
  for (std::size_t j = 0; j < vs.copies; ++j) {
    const std::uint64_t cell_seed = offset_seed(seed, j);
    Model model = build_seeded(vs.model, cell_seed);
    TrainConfig cfg = tc;
    cfg.epochs = vs.epochs;
    cfg.seed = cell_seed;
    train(model, data.train, cfg);
    out.models.push_back(std::move(model));
  }
  return out;
}

// Mean softmax probabilities of the whole variant on `x`.
Matrix2D variant_probs(const TrainedVariant& tv, const Matrix2D& x,
                       std::uint64_t seed) {
  if (tv.spec.kind == Variant::kMcDropout) {
    SeededRng rng = SeededRng(seed).split(streams::kEvalDropout);
    return mc_dropout_predict(tv.models[0], x, tv.spec.mc_samples, rng);
  }
  if (tv.spec.copies == 1) {
    return ensemble_predict(tv.models[0], x).mean_probs;
  }
  Matrix2D mean;
  for (std::size_t j = 0; j < tv.models.size(); ++j) {
    Matrix2D p = ensemble_predict(tv.models[j], x).mean_probs;
    if (j == 0) {
      mean = Matrix2D(p.rows(), p.cols(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) mean.values()[i] += p.values()[i];
  }
  const double inv = 1.0 / static_cast<double>(tv.models.size());
  for (double& v : mean.values()) v *= inv;
  return mean;
}

// Per-member predicted labels (the diversity command's raw material).
std::vector<std::vector<std::size_t>> variant_member_labels(
    const TrainedVariant& tv, const Matrix2D& x, std::uint64_t seed) {
  if (tv.spec.kind == Variant::kMcDropout) {
    SeededRng rng = SeededRng(seed).split(streams::kEvalDropout);
    std::vector<Matrix2D> passes =
        mc_dropout_samples(tv.models[0], x, tv.spec.mc_samples, rng);
    std::vector<std::vector<std::size_t>> out;
    for (const Matrix2D& p : passes) out.push_back(argmax_rows(p));
    return out;
  }
  if (tv.spec.copies > 1) {
    std::vector<std::vector<std::size_t>> out;
    for (const Model& m : tv.models)
      out.push_back(argmax_rows(ensemble_predict(m, x).mean_probs));
    return out;
  }
  return ensemble_predict(tv.models[0], x).member_labels;
}

std::string checkpoint_name(const std::string& variant, std::uint64_t seed,
                            std::size_t copies, std::size_t member) {
  std::ostringstream name;
  name << variant << "_seed" << seed;
  if (copies > 1) name << "_member" << member;
  name << ".ck";
  return name.str();
}

std::vector<Variant> parse_variant_list(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("variant list must not be empty");
  std::vector<Variant> out;
  for (const std::string& n : names) out.push_back(parse_variant(n));
  return out;
}

std::vector<std::uint64_t> checked_seeds(const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seed list must not be empty");
  std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) {
    throw ConfigError("seed list contains duplicates; outputs would collide");
  }
  return seeds;
}

}  // namespace

// ---- names ----------------------------------------------------------------------

Variant parse_variant(const std::string& name) {
  if (name == "single") return Variant::kSingle;
  if (name == "batch_ensemble") return Variant::kBatchEnsemble;
  if (name == "mc_dropout") return Variant::kMcDropout;
  if (name == "naive_ensemble") return Variant::kNaiveEnsemble;
  if (name == "naive_small") return Variant::kNaiveSmall;
  throw ConfigError(
      "unknown variant '" + name +
      "'; expected single, batch_ensemble, mc_dropout, naive_ensemble, or naive_small");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kSingle: return "single";
    case Variant::kBatchEnsemble: return "batch_ensemble";
    case Variant::kMcDropout: return "mc_dropout";
    case Variant::kNaiveEnsemble: return "naive_ensemble";
    case Variant::kNaiveSmall: return "naive_small";
  }
  throw ArgumentError("unreachable variant");
}

// ---- train ------------------------------------------------------------------------

TrainOutputs run_train(const ConfigFile& config,
                       const std::vector<std::uint64_t>& seeds,
                       const std::string& out_dir) {
  validate_known_keys(config);
  const ExperimentData data = load_data(config);
  const TrainConfig tc = base_train_config(config);
  const ModelSpec spec = base_spec(config, data);
  const std::uint64_t fingerprint = config_fingerprint(config);

  TrainOutputs out;
  for (std::uint64_t seed : checked_seeds(seeds)) {
    Model model = build_seeded(spec, seed);
    TrainConfig cfg = tc;
    cfg.seed = seed;
    TrainResult result = train(model, data.train, cfg, &data.test);

    std::vector<std::vector<std::string>> rows;
    for (const EpochStats& e : result.history) {
      rows.push_back({std::to_string(e.epoch), format_double(e.mean_loss),
                      format_double(e.train_accuracy),
                      format_double(e.eval_accuracy)});
    }
    const std::string history =
        out_path(out_dir, "history_seed" + std::to_string(seed) + ".csv");
    write_csv(history, "history", {"epoch", "loss", "train_acc", "val_acc"}, rows);
    out.history_paths.push_back(history);

    const std::string ck =
        out_path(out_dir, "model_seed" + std::to_string(seed) + ".ck");
    save_checkpoint(ck, model, fingerprint);
    out.checkpoint_paths.push_back(ck);
  }
  return out;
}

// ---- compare ---------------------------------------------------------------------

CompareOutputs run_compare(const ConfigFile& config,
                           const std::vector<std::uint64_t>& seeds,
                           const std::string& out_dir) {
  validate_known_keys(config);
  const ExperimentData data = load_data(config);
  const TrainConfig tc = base_train_config(config);
  const std::vector<Variant> variants = parse_variant_list(cfg_string_list(
      config, "compare", "variants",
      {"single", "batch_ensemble", "mc_dropout", "naive_ensemble", "naive_small"}));
  const std::size_t mc_samples =
      static_cast<std::size_t>(cfg_u64(config, "compare", "mc_samples", 8));
  const std::uint64_t fingerprint = config_fingerprint(config);

  CompareOutputs out;
  std::vector<std::vector<std::string>> rows;
  for (Variant v : variants) {
    const VariantSpec vs = make_variant(v, config, data, tc, mc_samples);
    for (std::uint64_t seed : checked_seeds(seeds)) {
      TrainedVariant tv = train_variant(vs, data, tc, seed);

      Matrix2D probs = variant_probs(tv, data.test.features, seed);
      CompareRow row;
      row.variant = variant_name(v);
      row.seed = seed;
      row.test_accuracy = accuracy(probs, data.test.labels);
      row.ece = ece(probs, data.test.labels).ece;
      std::vector<double> ent = predictive_entropy(probs);
      double ent_sum = 0.0;
      for (double h : ent) ent_sum += h;
      row.mean_entropy = ent_sum / static_cast<double>(ent.size());
      out.rows.push_back(row);
      rows.push_back({row.variant, std::to_string(seed),
                      format_double(row.test_accuracy), format_double(row.ece),
                      format_double(row.mean_entropy)});

      for (std::size_t j = 0; j < tv.models.size(); ++j) {
        const std::string ck = out_path(
            out_dir, checkpoint_name(row.variant, seed, tv.spec.copies, j));
        save_checkpoint(ck, tv.models[j], fingerprint);
        out.checkpoint_paths.push_back(ck);
      }
    }
  }
  out.csv_path = out_path(out_dir, "compare.csv");
  write_csv(out.csv_path, "compare",
            {"variant", "seed", "test_accuracy", "ece", "mean_entropy"}, rows);
  return out;
}

// ---- lifelong --------------------------------------------------------------------

LifelongOutputs run_lifelong(const ConfigFile& config,
                             const std::vector<std::uint64_t>& seeds,
                             const std::string& out_dir) {
  validate_known_keys(config);
  const ExperimentData data = load_data(config);
  const TrainConfig tc = base_train_config(config);
  const std::size_t tasks =
      static_cast<std::size_t>(cfg_u64(config, "lifelong", "tasks", 5));
  const std::vector<std::string> methods = cfg_string_list(
      config, "lifelong", "methods", {"batch_ensemble", "vanilla"});

  const ModelSpec shared = base_spec(config, data);
  if (shared.members < tasks) {
    throw ConfigError("'lifelong.tasks': " + std::to_string(tasks) +
                      " tasks need at least as many ensemble members, got " +
                      std::to_string(shared.members));
  }
  const TaskSequence sequence =
      split_tasks(data.train, data.test, tasks, data.data_seed);

  LifelongOutputs out;
  std::vector<std::vector<std::string>> rows;
  for (const std::string& method : methods) {
    SequenceMode mode;
    ModelSpec spec = shared;
    spec.classes = sequence[0].train.classes;
    spec.heads = tasks;
    spec.dropout_rate = 0.0;
    if (method == "batch_ensemble") {
      mode = SequenceMode::kMemberPerTask;
    } else if (method == "vanilla") {
      mode = SequenceMode::kFineTuneAll;
      spec.members = 0;
    } else {
      throw ConfigError("'lifelong.methods': unknown method '" + method +
                        "'; expected batch_ensemble or vanilla");
    }

    for (std::uint64_t seed : checked_seeds(seeds)) {
      TrainConfig cfg = tc;
      cfg.seed = seed;
      LifelongModel lm = train_sequence(build_seeded(spec, seed), sequence, cfg, mode);
      LifelongReport report = evaluate_lifelong(lm, sequence);
      for (std::size_t t = 0; t < tasks; ++t) {
        LifelongRow row;
        row.method = method;
        row.seed = seed;
        row.task = t;
        row.acc_after = lm.snapshot_accuracies[t];
        row.acc_final = report.accuracy[t];
        row.forgetting = report.forgetting[t];
        out.rows.push_back(row);
        rows.push_back({method, std::to_string(seed), std::to_string(t),
                        format_double(row.acc_after), format_double(row.acc_final),
                        format_double(row.forgetting)});
      }
    }
  }
  out.csv_path = out_path(out_dir, "lifelong.csv");
  write_csv(out.csv_path, "lifelong",
            {"method", "seed", "task_id", "acc_after", "acc_final", "forgetting"},
            rows);
  return out;
}

// ---- diversity -------------------------------------------------------------------

DiversityOutputs run_diversity(const ConfigFile& config,
                               const std::vector<std::uint64_t>& seeds,
                               const std::string& out_dir) {
  validate_known_keys(config);
  const ExperimentData data = load_data(config);
  const TrainConfig tc = base_train_config(config);
  const std::vector<double> fractions =
      cfg_double_list(config, "diversity", "fractions", {0.5, 0.2, 0.1});
  if (fractions.empty()) {
    throw ConfigError("'diversity.fractions': list must not be empty");
  }
  const std::vector<Variant> methods = parse_variant_list(cfg_string_list(
      config, "diversity", "methods",
      {"batch_ensemble", "naive_ensemble", "mc_dropout"}));
  const std::size_t mc_samples =
      static_cast<std::size_t>(cfg_u64(config, "diversity", "mc_samples", 8));

  DiversityOutputs out;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::vector<std::string>> prediction_rows;
  for (double fraction : fractions) {
    ExperimentData slice = data;
    slice.train = subsample(data.train, fraction, data.data_seed);
    for (Variant method : methods) {
      if (method == Variant::kSingle) {
        throw ConfigError(
            "'diversity.methods': the single model has no members to diversify");
      }
      const VariantSpec vs = make_variant(method, config, slice, tc, mc_samples);
      for (std::uint64_t seed : checked_seeds(seeds)) {
        TrainedVariant tv = train_variant(vs, slice, tc, seed);
        std::vector<std::vector<std::size_t>> member_labels =
            variant_member_labels(tv, data.test.features, seed);
        std::vector<DiversityPoint> points =
            diversity_profile(member_labels, data.test.labels);

        for (std::size_t m = 0; m < points.size(); ++m) {
          DiversityRow row;
          row.fraction = fraction;
          row.method = variant_name(method);
          row.seed = seed;
          row.member = m;
          row.accuracy = points[m].accuracy;
          row.raw_d = points[m].disagreement;
          row.normalized_d = points[m].normalized;
          out.rows.push_back(row);
          rows.push_back({format_double(fraction), row.method, std::to_string(seed),
                          std::to_string(m), format_double(row.accuracy),
                          format_double(row.raw_d), format_double(row.normalized_d)});
          for (std::size_t i = 0; i < member_labels[m].size(); ++i) {
            prediction_rows.push_back({format_double(fraction), row.method,
                                       std::to_string(seed), std::to_string(m),
                                       std::to_string(i),
                                       std::to_string(member_labels[m][i])});
          }
        }
      }
    }
  }
  out.csv_path = out_path(out_dir, "diversity.csv");
  write_csv(out.csv_path, "diversity",
            {"fraction", "method", "seed", "member", "accuracy", "raw_d",
             "normalized_d"},
            rows);
  out.predictions_path = out_path(out_dir, "diversity_predictions.csv");
  write_csv(out.predictions_path, "diversity_predictions",
            {"fraction", "method", "seed", "member", "index", "label"},
            prediction_rows);
  return out;
}

// ---- corruption ------------------------------------------------------------------

CorruptionOutputs run_corruption(const ConfigFile& config,
                                 const std::vector<std::uint64_t>& seeds,
                                 const std::string& out_dir) {
  validate_known_keys(config);
  const ExperimentData data = load_data(config);
  const std::vector<std::uint64_t> levels =
      cfg_u64_list(config, "corrupt", "levels", {1, 2, 3, 4, 5});
  if (levels.empty()) throw ConfigError("'corrupt.levels': list must not be empty");
  const std::vector<Variant> variants = parse_variant_list(cfg_string_list(
      config, "corrupt", "variants", {"single", "batch_ensemble", "naive_ensemble"}));
  const std::string ck_dir = cfg_string(config, "corrupt", "checkpoints", out_dir);
  const std::size_t members =
      static_cast<std::size_t>(cfg_u64(config, "model", "members", 4));
  const std::size_t mc_samples =
      static_cast<std::size_t>(cfg_u64(config, "compare", "mc_samples", 8));

  // Each level's noise is drawn once and shared by every variant and seed,
  // so rows differ only through the models.
  std::vector<Dataset> corrupted;  // index 0 = clean
  corrupted.push_back(data.test);
  for (std::uint64_t level : levels) {
    corrupted.push_back(corrupt(data.test, static_cast<int>(level),
                                offset_seed(data.data_seed, level)));
  }

  auto load_required = [&](const std::string& name) {
    const std::string path = (fs::path(ck_dir) / name).string();
    if (!fs::exists(path)) {
      throw StateError("missing checkpoint '" + path +
                       "'; run the compare command first");
    }
    return load_checkpoint(path).model;
  };

  CorruptionOutputs out;
  std::vector<std::vector<std::string>> rows;
  for (Variant v : variants) {
    const std::string name = variant_name(v);
    const std::size_t copies =
        (v == Variant::kNaiveEnsemble || v == Variant::kNaiveSmall) ? members : 1;
    for (std::uint64_t seed : checked_seeds(seeds)) {
      TrainedVariant tv;
      tv.spec.kind = v;
      tv.spec.copies = copies;
      tv.spec.mc_samples = (v == Variant::kMcDropout) ? mc_samples : 0;
      for (std::size_t j = 0; j < copies; ++j) {
        tv.models.push_back(load_required(checkpoint_name(name, seed, copies, j)));
      }

      for (std::size_t li = 0; li < corrupted.size(); ++li) {
        Matrix2D probs = variant_probs(tv, corrupted[li].features, seed);
        CorruptionRow row;
        row.variant = name;
        row.seed = seed;
        row.level = li == 0 ? 0 : static_cast<std::size_t>(levels[li - 1]);
        row.accuracy = accuracy(probs, corrupted[li].labels);
        row.ece = ece(probs, corrupted[li].labels).ece;
        out.rows.push_back(row);
        rows.push_back({name, std::to_string(seed), std::to_string(row.level),
                        format_double(row.accuracy), format_double(row.ece)});
      }
    }
  }
  out.csv_path = out_path(out_dir, "corruption.csv");
  write_csv(out.csv_path, "corruption",
            {"variant", "seed", "level", "accuracy", "ece"}, rows);
  return out;
}

// ---- gradcheck -------------------------------------------------------------------

namespace {

// Sum of the decay penalties whose gradients add_decay_gradients produces:
// shared_only decays trunk and active-head weights; mean_weight additionally
// couples the fast weights through the mean rank-1 modulation.
double decay_penalty(Model& model, DecayMode mode, double lambda,
                     std::size_t head) {
  double sum = 0.0;
  auto frob2 = [](const Matrix2D& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return s;
  };
  for (Layer& layer : model.trunk) {
    if (auto* be = std::get_if<BatchEnsembleLayer>(&layer)) {
      if (mode == DecayMode::kSharedOnly) {
        sum += frob2(be->slow);
      } else {
        Matrix2D p = matmul_transpose_a(be->fast_r, be->fast_s);
        const double inv = 1.0 / static_cast<double>(be->members());
        for (double& v : p.values()) v *= inv;
        sum += frob2(hadamard(be->slow, p));
      }
    } else if (auto* dense = std::get_if<DenseLayer>(&layer)) {
      sum += frob2(dense->weight);
    }
  }
  sum += frob2(model.heads[head].weight);
  return 0.5 * lambda * sum;
}

}  // namespace

GradcheckResult run_gradcheck(const ConfigFile& config, std::uint64_t seed) {
  validate_known_keys(config);
  const std::size_t instances =
      static_cast<std::size_t>(cfg_u64(config, "gradcheck", "instances", 50));
  if (instances == 0) throw ConfigError("'gradcheck.instances': must be positive");

  GradcheckResult result;
  result.instances = instances;

  for (std::size_t inst = 0; inst < instances; ++inst) {
    // Retry with fresh draws until no relu pre-activation sits close enough
    // to its kink for the central difference to straddle it.
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt == 64) {
        throw StateError("gradcheck: no kink-free instance after 64 draws");
      }
      SeededRng rng(offset_seed(seed, 1 + inst * 64 + attempt));

      ModelSpec spec;
      spec.in_dim = 2 + rng.next_below(6);
      spec.hidden = {2 + static_cast<std::size_t>(rng.next_below(6))};
      if (rng.next_below(2) == 0) {
        spec.hidden.push_back(2 + static_cast<std::size_t>(rng.next_below(4)));
      }
      spec.classes = 2 + rng.next_below(3);
      spec.members = 1 + rng.next_below(4);
      Model model = build_model(spec, rng);
      for (const ParamRef& p : trainable_params(model)) {
        if (p.kind == ParamKind::kBias || p.kind == ParamKind::kHeadBias) {
          for (double& v : p.tensor->values()) v = rng.next_uniform(-0.4, 0.4);
        }
      }

      const std::size_t batch = spec.members * (1 + rng.next_below(3));
      Matrix2D x(batch, spec.in_dim);
      for (double& v : x.values()) v = rng.next_uniform(-1.5, 1.5);
      std::vector<std::size_t> labels(batch);
      for (std::size_t b = 0; b < batch; ++b) labels[b] = rng.next_below(spec.classes);
      std::vector<std::size_t> assign = assign_subbatches(batch, spec.members);
      const DecayMode mode =
          inst % 2 == 0 ? DecayMode::kSharedOnly : DecayMode::kMeanWeight;
      const double lambda = 0.05;

      ForwardMode fwd_mode;
      fwd_mode.assign = &assign;

      ModelForwardResult fwd = model_forward(model, x, fwd_mode);
      bool near_kink = false;
      for (const LayerCache& lc : fwd.cache.trunk) {
        if (const auto* bc = std::get_if<BeForwardCache>(&lc)) {
          for (double a : bc->a.values()) {
            if (std::fabs(a) < 1e-4) near_kink = true;
          }
        }
      }
      if (near_kink) continue;

      XentResult xent = softmax_xent(fwd.logits, labels);
      ModelGradients grads = model_backward(model, xent.grad, fwd.cache);
      add_decay_gradients(model, grads, mode, lambda);

      auto loss = [&]() {
        double value =
            softmax_xent(model_forward(model, x, fwd_mode).logits, labels).loss;
        return value + decay_penalty(model, mode, lambda, 0);
      };

      std::vector<ParamRef> params = trainable_params(model);
      std::vector<GradRef> gtens = gradient_tensors(model, grads);
      const double eps = 1e-5;
      for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix2D& tensor = *params[i].tensor;
        const Matrix2D& analytic = *gtens[i].tensor;
        for (std::size_t k = 0; k < tensor.size(); ++k) {
          const double keep = tensor.values()[k];
          tensor.values()[k] = keep + eps;
          const double up = loss();
          tensor.values()[k] = keep - eps;
          const double down = loss();
          tensor.values()[k] = keep;
          const double fd = (up - down) / (2.0 * eps);
          const double a = analytic.values()[k];
          const double scale = std::max(std::fabs(a), std::fabs(fd));
          const double allowed = std::max(1e-6 * scale, 1e-8);
          result.worst_ratio =
              std::max(result.worst_ratio, std::fabs(a - fd) / allowed);
        }
      }
      break;
    }
  }
  return result;
}

}  // namespace batchens
