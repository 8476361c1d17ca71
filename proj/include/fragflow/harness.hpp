#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fragflow/denoiser.hpp"
#include "fragflow/retro.hpp"
#include "fragflow/steering.hpp"

namespace fragflow {
namespace harness {

// Bad configuration (CLI exit code 2); everything else maps to 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { kRpf, kRsf, kRpfRs, kRsfRs, kGreedy };

Mode mode_from_string(const std::string& s);
std::string mode_to_string(Mode m);
bool mode_uses_synthons(Mode m);

struct ExperimentConfig {
  Mode mode = Mode::kRpf;
  std::string dataset_dir;
  std::string model_path;
  std::string out_dir;
  uint64_t seed = 0;
  int steps = 50;     // T
  int samples = 100;  // N reactant sets per product
  int particles = 4;  // K
  double lambda = 1.0;
  int centers = 2;  // M
  std::vector<int> budgets = {70, 30};
  Stepper stepper = Stepper::kEuler;
  int dummy_count = 10;
  ResampleMode resample_mode = ResampleMode::kEveryStep;
  double ess_fraction = 0.5;
  std::vector<int> ks = {1, 3, 5, 10};
  bool dump_predictions = false;
  int threads = 0;       // 0: hardware concurrency
  int max_products = 0;  // 0: the whole test split; otherwise a prefix

  void validate() const;  // throws ConfigError
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;  // normalized echo, deterministic bytes
};

struct RunReport {
  ExperimentConfig config;
  std::vector<int> ks;
  std::vector<double> exact;
  std::vector<double> round_trip;
  std::vector<double> coverage;
  int products = 0;
  double wall_seconds = 0.0;  // stdout only, never serialized

  std::string to_json_text() const;
  std::string to_csv_text() const;
};

// Dataset persistence: <dir>/{train,valid,test}.jsonl, one reaction per line.
void save_dataset(const retro::Dataset& ds, const std::string& dir);
retro::Dataset load_dataset(const std::string& dir);
std::vector<retro::Reaction> load_reactions(const std::string& path);

struct TrainJobConfig {
  Mode family = Mode::kRpf;  // rpf or rsf; others share the rpf model
  std::string dataset_dir;
  std::string out_path;
  uint64_t seed = 0;
  TrainConfig train;
  int dummy_count = 10;
  bool permute_augment = true;
};

struct SavedModel {
  TabularModel model;
  Mode family = Mode::kRpf;
  int dummy_count = 10;
};

// Builds couplings from the train split (products for RPF, true-center
// synthons for RSF), trains with shared-permutation augmentation, and writes
// the checkpoint.
SavedModel train_model(const TrainJobConfig& cfg, TrainRecord* record = nullptr);
void save_model(const SavedModel& m, const std::string& path);
SavedModel load_model(const std::string& path);

// Per-product generation + ranking + metrics, averaged over the test split.
// Deterministic per seed; products are evaluated concurrently on derived
// streams.
RunReport run_experiment(const ExperimentConfig& cfg);

// Writes report.json / metrics.csv (and predictions.jsonl when enabled)
// under cfg.out_dir.
void write_report(const RunReport& report, const ExperimentConfig& cfg);

// Named ablation grids; returns the CSV text and writes
// ablation_<name>.csv under out_dir when it is non-empty.
std::string run_ablation_suite(const std::string& name, const ExperimentConfig& base,
                               const std::string& rsf_model_path = "");

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace harness
}  // namespace fragflow
