#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "lact/matrix.hpp"
#include "lact/neural.hpp"
#include "lact/radon.hpp"
#include "lact/reconstruct.hpp"
#include "lact/rng.hpp"

namespace lact {

/// Distributions for random hyperparameter search. Each on/off regularizer has
/// a point mass at "off" so that ablation rows can be selected from the trials.
struct SearchSpace {
  double dip_probability = 0.5;
  double alpha_zero_probability = 0.25;
  double alpha_max = 8.0;
  double tv_zero_probability = 0.25;
  double tv_min = 1e-3, tv_max = 1.0;
  double psr_zero_probability = 0.25;
  double psr_min = 1e-2, psr_max = 1.0;
  std::vector<std::size_t> patch_sizes{20, 30, 40};
  double lr_min = 1e-4, lr_max = 0.5;
  std::vector<std::size_t> n_iters{300, 400, 800, 1200};

  ReconConfig sample(Rng& rng) const;
};

struct EvalCase {
  Sinogram sinogram;
  Image truth;
};

/// Phantoms with their limited-angle sinograms and the shared support mask.
struct EvalSuite {
  std::vector<EvalCase> cases;
  Image mask;
};

struct SuiteSpec {
  std::size_t count = 4;
  std::size_t side = 64;
  double arc_deg = 30.0;
  double angle_step_deg = 0.5;
  double noise_sigma = 0.01;
  std::size_t min_holes = 3, max_holes = 5;
  std::uint64_t seed = 0;
};

EvalSuite make_suite(const SuiteSpec& spec);

/// Supplies patch autoencoders per patch size, training them on demand from
/// eight generated phantoms. Optionally caches models as `ae_p<size>.bin` in a directory.
class ModelProvider {
 public:
  ModelProvider(std::size_t side, std::uint64_t seed, AutoencoderTraining training = {}, std::string cache_dir = {});

  const PatchAutoencoder& get(std::size_t patch_size);

  /// Training images used for every patch size.
  std::vector<Image> training_images() const;

 private:
  std::size_t side_;
  std::uint64_t seed_;
  AutoencoderTraining training_;
  std::string cache_dir_;
  std::mutex mutex_;
  std::map<std::size_t, std::unique_ptr<PatchAutoencoder>> models_;
};

/// Reconstructs every case, binarizes, and returns per-image MCC.
/// Increments `runs` once per reconstruction when given.
std::vector<double> evaluate_config(const ReconConfig& cfg, const EvalSuite& suite, ModelProvider& models,
                                    std::atomic<std::size_t>* runs = nullptr);

struct TrialRecord {
  std::size_t index = 0;
  ReconConfig config;
  std::vector<double> per_image;
  double total = 0.0;
  double wall_seconds = 0.0;
  std::string error;
};

struct SearchOptions {
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

/// Worker count from a requested value (0 = hardware) capped by LACT_THREADS when set > 0.
std::size_t resolve_workers(std::size_t requested);

/// Samples `trials` configs from `space`, evaluates each on the suite, and
/// returns records sorted by total MCC (descending, ties by trial index).
/// A failing trial scores -1 per image and keeps its error message.
std::vector<TrialRecord> hparam_search(const SearchSpace& space, const EvalSuite& suite, const SearchOptions& options,
                                       ModelProvider& models, std::atomic<std::size_t>* runs = nullptr);

/// Trial table without timing columns, so reruns are byte-identical.
void write_trials_csv(const std::string& path, const std::vector<TrialRecord>& records);
std::vector<TrialRecord> read_trials_csv(const std::string& path);
void write_timings_csv(const std::string& path, const std::vector<TrialRecord>& records);

struct NamedConfig {
  std::string name;
  ReconConfig config;
};

/// Ablation row names in table order.
const std::vector<std::string>& ablation_row_names();

/// Best hyperparameter set per regularization row of the ablation table.
std::vector<NamedConfig> table1_configs();

/// Picks, for each excluded method, the best trial without it, plus the best
/// trial using all four ("Full"). Throws ValueError when a row has no candidate.
std::vector<NamedConfig> select_ablation_configs(const std::vector<TrialRecord>& records);

struct AblationRow {
  std::string name;
  ReconConfig config;
  std::vector<double> per_image;
  double mcc = 0.0;
};

/// Evaluates the five rows (rows may come in any order; all five are required).
/// The excluded method of each row is forced off.
std::vector<AblationRow> ablate(const std::vector<NamedConfig>& configs, const EvalSuite& suite, ModelProvider& models,
                                std::size_t workers = 1);

/// CSV with columns name,DIP,alpha,lambda_tv,lambda_psr,patch,lr,n_iter,MCC.
/// The patch column shows '-' when PSR is off.
std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace lact
