#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fcdn/dataset.hpp"
#include "fcdn/model.hpp"

namespace fcdn {

// Appends `copies` noisy duplicates of every trial. Noise is zero-mean
// Gaussian per channel with std = sigma_frac times that channel's std within
// the trial, so quiet channels stay quiet. copies = 0 returns the input.
EegDataset augment_gaussian(const EegDataset& ds, int copies = 4,
                            double sigma_frac = 0.1, std::uint64_t seed = 0);

// Trial-index utilities shared by the split machinery.
EegDataset subset_trials(const EegDataset& ds, std::span<const std::int64_t> idx);
EegDataset concat_trials(std::span<const EegDataset> parts);
// Random permutation of the labels, samples untouched (chance-level control).
EegDataset shuffle_labels(const EegDataset& ds, std::uint64_t seed);

enum class SplitMode { holdout, kfold, loso };

struct SplitPlan {
  SplitMode mode = SplitMode::holdout;
  int k = 5;               // kfold only
  double train_frac = 0.6; // holdout only
  double val_frac = 0.2;   // holdout: of the whole set; kfold: of the non-test part
  double test_frac = 0.2;  // holdout only
  int augment_copies = 0;
  double sigma_frac = 0.1;
  // Default pipeline splits first and augments only the training indices so
  // noisy near-duplicates can never leak into val/test. Setting this flag
  // augments the whole set before splitting instead; scores it produces are
  // optimistic and the runners print a warning.
  bool augment_before_split = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Split {
  std::vector<std::int64_t> train, val, test;
};

// Class-stratified, seed-deterministic index sets. holdout produces one
// split, kfold produces k (each trial lands in exactly one test fold).
// Subject-level splits are handled by run_loso, not here.
std::vector<Split> make_splits(const EegDataset& ds, const SplitPlan& plan);

struct EvalReport {
  std::string name;
  std::vector<double> fold_acc;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  std::vector<std::int64_t> confusion;  // row-major [true][pred], pooled over folds
  std::vector<double> per_class_acc;
  std::vector<std::string> class_names;
  double ablation_delta = std::numeric_limits<double>::quiet_NaN();
  double permutation_p = std::numeric_limits<double>::quiet_NaN();
  double runtime_s = 0.0;  // console only; serialized reports never carry it
  std::uint64_t config_fingerprint = 0;
  std::vector<std::string> notes;  // per-fold failures and warnings

  int n_classes() const { return static_cast<int>(class_names.size()); }
  void validate() const;
};

// JSON carries everything except runtime_s, so identical runs serialize to
// identical bytes. The CSV table has one row per report: name, mean, std.
std::string report_to_json(const EvalReport& r);
void write_report_json(const EvalReport& r, const std::filesystem::path& path);
void write_report_csv(std::span<const EvalReport> reports,
                      const std::filesystem::path& path);

// Accuracy of a fitted model on a held-out set; optionally accumulates the
// row-major confusion matrix (allocated/zeroed by the caller or empty).
double evaluate_model(FcdnModel& m, const EegDataset& test,
                      std::vector<std::int64_t>* confusion = nullptr);

// Trains one model per split and aggregates accuracies and the pooled
// confusion matrix. A fold that throws is recorded in notes and skipped.
EvalReport run_cv(const EegDataset& ds, const SplitPlan& plan,
                  const FcdnConfig& cfg, std::uint64_t seed);

// Leave-one-subject-out: each subject in turn is the test set while the
// others supply training and validation data. Channel weights, any
// data-derived statistics and the early-stopping signal come from source
// subjects only.
std::vector<EvalReport> run_loso(std::span<const EegDataset> subjects,
                                 const FcdnConfig& cfg, std::uint64_t seed,
                                 int augment_copies = 0, double sigma_frac = 0.1);

enum class AblationMode { no_fc, no_occipital };

struct AblationResult {
  EvalReport full;
  EvalReport ablated;
  double delta = 0.0;  // full mean accuracy minus ablated mean accuracy
};

// Runs the same plan twice: intact, then with the ablation applied. no_fc
// trains on all-ones channel weights; no_occipital removes the occipital
// channels before anything else (the config's channel count is adjusted).
AblationResult run_ablation(const EegDataset& ds, const SplitPlan& plan,
                            const FcdnConfig& cfg, AblationMode mode,
                            std::uint64_t seed);

// Two-sided sign-flip test on the mean paired difference. All 2^n sign
// patterns are enumerated when that is no more than n_perm; otherwise n_perm
// random patterns are drawn with the identity always among them.
double paired_permutation_test(std::span<const double> acc_a,
                               std::span<const double> acc_b,
                               int n_perm = 10000, std::uint64_t seed = 0);

enum class FeatureStage { post_conv1, post_conv2, post_conv3, pre_head };

// One CSV data row per trial: label plus the flattened activation at the
// requested stage. Activations wider than proj_dim are reduced by a fixed
// seeded sparse sign projection; the leading comment line records exactly
// which one. pre_head exports the class-token embedding.
void export_features(FcdnModel& m, const EegDataset& ds, FeatureStage stage,
                     const std::filesystem::path& path, int proj_dim = 64,
                     std::uint64_t seed = 0x7E57);

// Per-channel mean absolute conv-stack output (averaged over trials, bands
// and feature maps): exactly one "channel,value" row per EEG channel.
void export_topography(FcdnModel& m, const EegDataset& ds,
                       const std::filesystem::path& path);

}  // namespace fcdn
