// Command-line front end: gen-data / train / eval / ablate.
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fragflow/harness.hpp"

namespace hh = fragflow::harness;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("FRAGFLOW_OUT");
  return env ? env : ".";
}

int run(int argc, char** argv) {
  CLI::App app{"Discrete flow matching with Feynman-Kac steering on a synthetic fragment-join reaction world"};
  app.require_subcommand(1);

  // --- gen-data ---
  auto* gen = app.add_subcommand("gen-data", "Generate a reaction dataset");
  std::string gen_out = default_out_dir();
  uint64_t gen_seed = 0;
  fragflow::retro::DatasetConfig dcfg;
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--train", dcfg.train_count, "Training reactions");
  gen->add_option("--valid", dcfg.valid_count, "Validation reactions");
  gen->add_option("--test", dcfg.test_count, "Test reactions");
  gen->add_option("--frag-min", dcfg.fragment_min, "Smallest fragment size");
  gen->add_option("--frag-max", dcfg.fragment_max, "Largest fragment size");
  gen->add_option("--extra-edge-prob", dcfg.extra_edge_prob, "Chance of a cycle edge per fragment");
  gen->add_option("--multi-answer", dcfg.multi_answer_fraction,
                  "Fraction with randomized leaving-group labels");

  // --- train ---
  auto* train = app.add_subcommand("train", "Fit a tabular denoiser");
  hh::TrainJobConfig tcfg;
  std::string train_family = "rpf";
  tcfg.out_path = default_out_dir() + "/model.json";
  train->add_option("--data", tcfg.dataset_dir, "Dataset directory")->required();
  train->add_option("--mode", train_family, "Model family: rpf or rsf");
  train->add_option("--out", tcfg.out_path, "Checkpoint path");
  train->add_option("--seed", tcfg.seed, "Training seed");
  train->add_option("--epochs", tcfg.train.epochs, "SGD epochs");
  train->add_option("--lr", tcfg.train.lr, "Learning rate");
  train->add_option("--lambda-edge", tcfg.train.lambda_edge, "Edge loss weight");
  train->add_option("--buckets", tcfg.train.time_buckets, "Time buckets");
  train->add_option("--dummy-count", tcfg.dummy_count, "Padding dummy nodes");
  bool no_permute = false;
  train->add_flag("--no-permute", no_permute, "Disable node-permutation augmentation");

  // --- eval ---
  auto* eval = app.add_subcommand("eval", "Run an experiment and report metrics");
  std::string eval_config_path;
  hh::ExperimentConfig ecfg;
  ecfg.out_dir = default_out_dir();
  std::string eval_mode = "rpf", eval_stepper = "euler", eval_resample = "every-step";
  eval->add_option("--config", eval_config_path, "JSON config (overrides all flags)");
  eval->add_option("--mode", eval_mode, "rpf | rsf | rpf-rs | rsf-rs | greedy");
  eval->add_option("--data", ecfg.dataset_dir, "Dataset directory");
  eval->add_option("--model", ecfg.model_path, "Checkpoint path");
  eval->add_option("--out", ecfg.out_dir, "Report directory");
  eval->add_option("--seed", ecfg.seed, "Evaluation seed");
  eval->add_option("--T", ecfg.steps, "Sampling steps");
  eval->add_option("--N", ecfg.samples, "Reactant sets per product");
  eval->add_option("--K", ecfg.particles, "Particles");
  eval->add_option("--lambda", ecfg.lambda, "Steering intensity");
  eval->add_option("--M", ecfg.centers, "Synthon candidates");
  eval->add_option("--budgets", ecfg.budgets, "Per-synthon sample budgets");
  eval->add_option("--stepper", eval_stepper, "euler | rk2");
  eval->add_option("--dummy-count", ecfg.dummy_count, "Padding dummy nodes");
  eval->add_option("--resample", eval_resample, "every-step | ess-threshold");
  eval->add_option("--ess-fraction", ecfg.ess_fraction, "ESS resampling threshold");
  eval->add_option("--threads", ecfg.threads, "Worker threads (0 = auto)");
  eval->add_option("--max-products", ecfg.max_products, "Evaluate only a test prefix");
  bool dump = false;
  eval->add_flag("--dump-predictions", dump, "Write per-product ranked predictions");

  // --- ablate ---
  auto* ablate = app.add_subcommand("ablate", "Run a named ablation grid");
  std::string suite, rsf_model;
  hh::ExperimentConfig acfg;
  acfg.out_dir = default_out_dir();
  ablate->add_option("--suite", suite, "particles | steps | budget-split | matched-compute")
      ->required();
  ablate->add_option("--data", acfg.dataset_dir, "Dataset directory")->required();
  ablate->add_option("--model", acfg.model_path, "RPF checkpoint")->required();
  ablate->add_option("--rsf-model", rsf_model, "RSF checkpoint (budget-split)");
  ablate->add_option("--out", acfg.out_dir, "Output directory");
  ablate->add_option("--seed", acfg.seed, "Evaluation seed");
  ablate->add_option("--T", acfg.steps, "Sampling steps");
  ablate->add_option("--N", acfg.samples, "Reactant sets per product");
  ablate->add_option("--threads", acfg.threads, "Worker threads (0 = auto)");
  ablate->add_option("--max-products", acfg.max_products, "Evaluate only a test prefix");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto ds = fragflow::retro::generate_dataset(dcfg, fragflow::RandomStream(gen_seed, 0x64617461));
    hh::save_dataset(ds, gen_out);
    std::cout << "wrote " << ds.train.size() << "/" << ds.valid.size() << "/"
              << ds.test.size() << " reactions to " << gen_out << "\n";
    return 0;
  }
  if (train->parsed()) {
    tcfg.family = hh::mode_from_string(train_family);
    tcfg.permute_augment = !no_permute;
    fragflow::TrainRecord record;
    hh::train_model(tcfg, &record);
    std::cout << "trained " << train_family << " model, final epoch loss "
              << (record.epoch_loss.empty() ? 0.0 : record.epoch_loss.back()) << ", saved "
              << tcfg.out_path << "\n";
    return 0;
  }
  if (eval->parsed()) {
    if (!eval_config_path.empty()) {
      ecfg = hh::ExperimentConfig::from_json_text(hh::read_text_file(eval_config_path));
    } else {
      ecfg.mode = hh::mode_from_string(eval_mode);
      ecfg.stepper = eval_stepper == "rk2" ? fragflow::Stepper::kRk2
                                           : fragflow::Stepper::kEuler;
      if (eval_stepper != "euler" && eval_stepper != "rk2")
        throw hh::ConfigError("unknown stepper: " + eval_stepper);
      ecfg.resample_mode = eval_resample == "ess-threshold"
                               ? fragflow::ResampleMode::kEssThreshold
                               : fragflow::ResampleMode::kEveryStep;
      if (eval_resample != "every-step" && eval_resample != "ess-threshold")
        throw hh::ConfigError("unknown resample mode: " + eval_resample);
      ecfg.dump_predictions = dump;
      ecfg.validate();
    }
    hh::RunReport report = hh::run_experiment(ecfg);
    std::cout << report.to_csv_text();
    std::cout << "products=" << report.products << " wall=" << report.wall_seconds
              << "s\n";
    return 0;
  }
  if (ablate->parsed()) {
    acfg.mode = hh::Mode::kRpf;
    acfg.validate();
    std::cout << hh::run_ablation_suite(suite, acfg, rsf_model);
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
