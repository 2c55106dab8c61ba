#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fcdn/model.hpp"

namespace fcdn {

// Sliding-window replay over recorded trials with a frozen model: classify
// every window, fuse the window probabilities into one trial decision, and
// score whole runs.

struct WindowPlan {
  double window_s = 2.0;
  double overlap_frac = 0.5;

  void validate() const;  // window positive, 0 <= overlap < 1
};

// (start, end) sample ranges at hop = window * (1 - overlap); a final
// partial window is dropped. 5 s of signal under the defaults gives exactly
// four windows at any sampling rate.
std::vector<std::pair<std::int64_t, std::int64_t>> plan_windows(
    std::int64_t trial_len_samples, double fs, const WindowPlan& plan);

struct TrialStreamResult {
  std::vector<std::vector<double>> window_proba;  // per window, per class
  std::vector<int> window_pred;                   // argmax per window
  std::vector<double> fused_proba;                // mean over windows
  int decision = 0;                               // argmax of fused_proba
  bool tie = false;  // fused maximum shared by several classes (lowest wins)
};

// Core entry point over band-filtered signals: each element is one trial as
// a [1,1,K,T] tensor in model band order. Windows are sliced from these
// signals, so a window's output depends only on band samples before its end.
TrialStreamResult stream_windows(FcdnModel& m,
                                 const std::array<nn::Tensor<float>, kNumBands>& bands,
                                 double fs, const WindowPlan& plan);

// Convenience wrapper over a raw trial. By default the whole trial is
// band-filtered once and windows are sliced from the result — identical to
// the offline pipeline. filter_per_window instead filters each window in
// isolation (edge transients included), for studying that trade-off.
TrialStreamResult stream_trial(FcdnModel& m, const EegDataset& ds,
                               std::int64_t trial, const WindowPlan& plan,
                               bool filter_per_window = false);

enum class FusionCriterion { prob_average, window_majority };

struct ScoreOptions {
  FusionCriterion criterion = FusionCriterion::prob_average;
  double threshold = 0.75;  // window_majority: required fraction of hits
  bool strict = false;      // require strictly more than the threshold
};

struct RunResult {
  int run_index = 0;
  std::string criterion;
  std::vector<std::int64_t> trial_ids;  // indices into the source dataset
  std::vector<int> labels;
  std::vector<TrialStreamResult> trials;
  std::vector<bool> success;
  std::int64_t n_success = 0;
  double success_rate = 0.0;
};

// prob_average: success iff the fused decision matches the label.
// window_majority: success iff the fraction of windows whose argmax matches
// the label reaches the threshold (>= by default, > when strict).
RunResult score_run(std::vector<TrialStreamResult> trials,
                    std::span<const int> labels, const ScoreOptions& opts,
                    int run_index = 0);

struct PseudoOnlineResult {
  std::vector<RunResult> runs;           // prob-average criterion
  std::vector<RunResult> runs_majority;  // window-majority criterion
  double avg_success = 0.0;
  double avg_success_majority = 0.0;
};

// Replays n_runs independent runs: each samples trials_per_class_per_run
// trials of every class (class-major order), streams them against the
// frozen model and scores under both fusion criteria.
PseudoOnlineResult run_pseudo_online(FcdnModel& m, const EegDataset& ds,
                                     int n_runs = 3,
                                     int trials_per_class_per_run = 10,
                                     std::uint64_t seed = 0,
                                     const WindowPlan& plan = {},
                                     double threshold = 0.75, bool strict = false);

// Serialization: JSON per run (no wall-clock content, reruns are
// byte-identical), a success-grid CSV (class,trial_index,success) and a
// per-run success-rate table with an average row.
std::string run_to_json(const RunResult& r);
void write_run_json(const RunResult& r, const std::filesystem::path& path);
void write_success_grid_csv(const RunResult& r, const std::filesystem::path& path);
void write_run_table_csv(std::span<const RunResult> runs,
                         const std::filesystem::path& path);

}  // namespace fcdn
