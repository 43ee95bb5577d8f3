// Command-line front end. Every subcommand is a thin shell around one of the
// run_* functions: parse flags, load the config, print where the outputs
// went. Exit codes are stable per error category so scripts can branch on
// the kind of failure without parsing messages.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "batchens/config.hpp"
#include "batchens/error.hpp"
#include "batchens/experiments.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::uint64_t> seeds;  // empty → [run].seeds
  std::string out_dir;               // empty → [run].out
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path, "Path to the INI config file")
      ->required();
  cmd->add_option("-s,--seed", args.seeds,
                  "Seeds to run (overrides [run].seeds)");
  cmd->add_option("-o,--out", args.out_dir,
                  "Output directory (overrides [run].out)");
}

struct Resolved {
  batchens::ConfigFile config;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
};

Resolved resolve(const CommonArgs& args) {
  Resolved r;
  r.config = batchens::load_config_file(args.config_path);
  r.seeds = args.seeds.empty()
                ? batchens::cfg_u64_list(r.config, "run", "seeds", {0})
                : args.seeds;
  r.out_dir = args.out_dir.empty()
                  ? batchens::cfg_string(r.config, "run", "out", "out")
                  : args.out_dir;
  return r;
}

int exit_code_for(const batchens::Error& e) {
  using namespace batchens;
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const ArgumentError*>(&e)) return 3;
  if (dynamic_cast<const ShapeError*>(&e)) return 4;
  if (dynamic_cast<const IndexError*>(&e)) return 5;
  if (dynamic_cast<const StateError*>(&e)) return 6;
  if (dynamic_cast<const FormatError*>(&e)) return 7;
  if (dynamic_cast<const TrainingError*>(&e)) return 8;
  if (dynamic_cast<const IoError*>(&e)) return 9;
  return 10;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight-sharing ensembles: training, comparison, and analysis"};
  app.require_subcommand(1);

  CommonArgs train_args, compare_args, lifelong_args, diversity_args,
      corrupt_args, gradcheck_args;
  std::uint64_t gradcheck_seed = 17;

  CLI::App* train = app.add_subcommand(
      "train", "Train one model per seed; write checkpoints and histories");
  add_common(train, train_args);

  CLI::App* compare = app.add_subcommand(
      "compare", "Train all variants and tabulate accuracy/calibration");
  add_common(compare, compare_args);

  CLI::App* lifelong = app.add_subcommand(
      "lifelong", "Sequential-task training with forgetting report");
  add_common(lifelong, lifelong_args);

  CLI::App* diversity = app.add_subcommand(
      "diversity", "Member disagreement across training-set fractions");
  add_common(diversity, diversity_args);

  CLI::App* corrupt = app.add_subcommand(
      "corrupt", "Evaluate compare's checkpoints on perturbed inputs");
  add_common(corrupt, corrupt_args);

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference audit of the analytic gradients");
  gradcheck->add_option("-c,--config", gradcheck_args.config_path,
                        "Path to the INI config file")
      ->required();
  gradcheck->add_option("-s,--seed", gradcheck_seed, "Instance-draw seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      Resolved r = resolve(train_args);
      batchens::TrainOutputs out = batchens::run_train(r.config, r.seeds, r.out_dir);
      for (const std::string& p : out.checkpoint_paths)
        std::printf("checkpoint %s\n", p.c_str());
      for (const std::string& p : out.history_paths)
        std::printf("history %s\n", p.c_str());
    } else if (*compare) {
      Resolved r = resolve(compare_args);
      batchens::CompareOutputs out =
          batchens::run_compare(r.config, r.seeds, r.out_dir);
      std::printf("compare %s\n", out.csv_path.c_str());
    } else if (*lifelong) {
      Resolved r = resolve(lifelong_args);
      batchens::LifelongOutputs out =
          batchens::run_lifelong(r.config, r.seeds, r.out_dir);
      std::printf("lifelong %s\n", out.csv_path.c_str());
    } else if (*diversity) {
      Resolved r = resolve(diversity_args);
      batchens::DiversityOutputs out =
          batchens::run_diversity(r.config, r.seeds, r.out_dir);
      std::printf("diversity %s\n", out.csv_path.c_str());
      std::printf("predictions %s\n", out.predictions_path.c_str());
    } else if (*corrupt) {
      Resolved r = resolve(corrupt_args);
      batchens::CorruptionOutputs out =
          batchens::run_corruption(r.config, r.seeds, r.out_dir);
      std::printf("corruption %s\n", out.csv_path.c_str());
    } else if (*gradcheck) {
      batchens::ConfigFile config =
          batchens::load_config_file(gradcheck_args.config_path);
      batchens::GradcheckResult result =
          batchens::run_gradcheck(config, gradcheck_seed);
      std::printf("gradcheck instances=%zu worst_tolerance_ratio=%.6g %s\n",
                  result.instances, result.worst_ratio,
                  result.worst_ratio <= 1.0 ? "ok" : "FAILED");
      return result.worst_ratio <= 1.0 ? 0 : 1;
    }
  } catch (const batchens::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 11;
  }
  return 0;
}
