#include "fcdn/streaming.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fcdn/error.hpp"
#include "fcdn/harness.hpp"
#include "fcdn/rng.hpp"

namespace fcdn {

using json = nlohmann::json;
using nn::Tensor;

void WindowPlan::validate() const {
  require(window_s > 0.0, "window plan: window length must be positive");
  require(overlap_frac >= 0.0 && overlap_frac < 1.0,
          "window plan: overlap must be in [0,1)");
}

std::vector<std::pair<std::int64_t, std::int64_t>> plan_windows(
    std::int64_t trial_len_samples, double fs, const WindowPlan& plan) {
  plan.validate();
  require(fs > 0.0, "window plan: sampling rate must be positive");
  const auto win = std::llround(plan.window_s * fs);
  require(win >= 1, "window plan: window shorter than one sample");
  require(win <= trial_len_samples, "window plan: window does not fit in the trial");
  const auto hop = std::max<std::int64_t>(
      1, std::llround(static_cast<double>(win) * (1.0 - plan.overlap_frac)));

  std::vector<std::pair<std::int64_t, std::int64_t>> out;
  for (std::int64_t start = 0; start + win <= trial_len_samples; start += hop)
    out.emplace_back(start, start + win);
  return out;
}

namespace {

// Copies sample range [s, e) of a [1,1,K,T] band tensor into [1,1,K,e-s].
Tensor<float> slice_window(const Tensor<float>& band, std::int64_t s, std::int64_t e) {
  const std::int64_t k = band.dim(2), t = band.dim(3);
  Tensor<float> out({1, 1, k, e - s});
  for (std::int64_t ch = 0; ch < k; ++ch) {
    const float* src = band.data.data() + ch * t + s;
    std::copy(src, src + (e - s), out.data.data() + ch * (e - s));
  }
  return out;
}

std::vector<double> softmax_row(const float* row, std::int64_t c) {
  double mx = -1e300;
  for (std::int64_t i = 0; i < c; ++i) mx = std::max(mx, static_cast<double>(row[i]));
  double z = 0.0;
  std::vector<double> p(static_cast<std::size_t>(c));
  for (std::int64_t i = 0; i < c; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(row[i]) - mx);
    z += p[static_cast<std::size_t>(i)];
  }
  for (auto& v : p) v /= z;
  return p;
}

int argmax_lowest(std::span<const double> p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

}  // namespace

TrialStreamResult stream_windows(FcdnModel& m,
                                 const std::array<Tensor<float>, kNumBands>& bands,
                                 double fs, const WindowPlan& plan) {
  require(m.fitted, "stream: model has not been fitted");
  for (const auto& b : bands) {
    require(b.rank() == 4 && b.dim(0) == 1 && b.dim(1) == 1,
            "stream: band signals must be [1,1,K,T]");
    require(b.dim(2) == m.cfg.n_channels, "stream: channel count mismatch");
    require(b.same_shape(bands[0]), "stream: band shapes differ");
  }
  const std::int64_t t_len = bands[0].dim(3);
  const auto windows = plan_windows(t_len, fs, plan);
  require(!windows.empty(), "stream: no full window fits");
  require(windows[0].second - windows[0].first >= m.cfg.min_input_len(),
          "stream: window shorter than the conv receptive length");

  TrialStreamResult res;
  const auto n_classes = static_cast<std::size_t>(m.cfg.n_classes);
  res.fused_proba.assign(n_classes, 0.0);
  for (const auto& [s, e] : windows) {
    std::array<Tensor<float>, kNumBands> wb;
    for (int b = 0; b < kNumBands; ++b) wb[b] = slice_window(bands[b], s, e);
    const Tensor<float> logits = fcdn_forward(m, wb, nn::Mode::eval);
    auto p = softmax_row(logits.data.data(), logits.dim(1));
    res.window_pred.push_back(argmax_lowest(p));
    for (std::size_t c = 0; c < n_classes; ++c) res.fused_proba[c] += p[c];
    res.window_proba.push_back(std::move(p));
  }
  const auto inv = 1.0 / static_cast<double>(windows.size());
  for (auto& v : res.fused_proba) v *= inv;
  res.decision = argmax_lowest(res.fused_proba);
  for (std::size_t c = 0; c < n_classes; ++c)
    if (static_cast<int>(c) != res.decision &&
        res.fused_proba[c] == res.fused_proba[static_cast<std::size_t>(res.decision)])
      res.tie = true;
  return res;
}

TrialStreamResult stream_trial(FcdnModel& m, const EegDataset& ds,
                               std::int64_t trial, const WindowPlan& plan,
                               bool filter_per_window) {
  require(trial >= 0 && trial < ds.n_trials(), "stream: trial index out of range");
  require(std::abs(ds.fs - m.cfg.fs) < 1e-9, "stream: sampling rate mismatch");
  const int k = ds.n_channels();
  const std::int64_t t_len = ds.samples_per_trial;

  if (!filter_per_window) {
    // Offline-consistent path: filter the whole trial once, slice windows.
    const std::int64_t one[] = {trial};
    const BandedDataset bd = band_split(subset_trials(ds, one), m.cfg.fir_order);
    std::array<Tensor<float>, kNumBands> bands;
    for (int b = 0; b < kNumBands; ++b) {
      bands[b] = Tensor<float>({1, 1, k, t_len});
      for (int ch = 0; ch < k; ++ch) {
        const auto src = bd.bands[b].trial_channel(0, ch);
        std::copy(src.begin(), src.end(), bands[b].data.data() + ch * t_len);
      }
    }
    return stream_windows(m, bands, ds.fs, plan);
  }

  // Per-window filtering: each window is cut from the raw signal and
  // band-filtered in isolation, edge transients included.
  const auto windows = plan_windows(t_len, ds.fs, plan);
  require(!windows.empty(), "stream: no full window fits");

  TrialStreamResult res;
  const auto n_classes = static_cast<std::size_t>(m.cfg.n_classes);
  res.fused_proba.assign(n_classes, 0.0);
  for (const auto& [s, e] : windows) {
    EegDataset cut = ds;
    cut.labels = {ds.labels[static_cast<std::size_t>(trial)]};
    cut.samples_per_trial = e - s;
    cut.epoch_onset_sample = 0;
    cut.samples.clear();
    for (int ch = 0; ch < k; ++ch) {
      const auto src = ds.trial_channel(trial, ch);
      cut.samples.insert(cut.samples.end(), src.begin() + s, src.begin() + e);
    }
    const BandedDataset bd = band_split(cut, m.cfg.fir_order);
    std::array<Tensor<float>, kNumBands> wb;
    for (int b = 0; b < kNumBands; ++b) {
      wb[b] = Tensor<float>({1, 1, k, e - s});
      for (int ch = 0; ch < k; ++ch) {
        const auto src = bd.bands[b].trial_channel(0, ch);
        std::copy(src.begin(), src.end(), wb[b].data.data() + ch * (e - s));
      }
    }
    const Tensor<float> logits = fcdn_forward(m, wb, nn::Mode::eval);
    auto p = softmax_row(logits.data.data(), logits.dim(1));
    res.window_pred.push_back(argmax_lowest(p));
    for (std::size_t c = 0; c < n_classes; ++c) res.fused_proba[c] += p[c];
    res.window_proba.push_back(std::move(p));
  }
  const auto inv = 1.0 / static_cast<double>(windows.size());
  for (auto& v : res.fused_proba) v *= inv;
  res.decision = argmax_lowest(res.fused_proba);
  for (std::size_t c = 0; c < n_classes; ++c)
    if (static_cast<int>(c) != res.decision &&
        res.fused_proba[c] == res.fused_proba[static_cast<std::size_t>(res.decision)])
      res.tie = true;
  return res;
}

RunResult score_run(std::vector<TrialStreamResult> trials,
                    std::span<const int> labels, const ScoreOptions& opts,
                    int run_index) {
  require(trials.size() == labels.size(), "score: trial/label length mismatch");
  require(!trials.empty(), "score: empty run");

  RunResult r;
  r.run_index = run_index;
  r.criterion = opts.criterion == FusionCriterion::prob_average
                    ? "prob-average"
                    : "window-majority";
  r.labels.assign(labels.begin(), labels.end());
  for (std::size_t t = 0; t < trials.size(); ++t) {
    bool ok = false;
    if (opts.criterion == FusionCriterion::prob_average) {
      ok = trials[t].decision == labels[t];
    } else {
      const auto& preds = trials[t].window_pred;
      std::int64_t hits = 0;
      for (int p : preds) hits += p == labels[t];
      const double frac =
          static_cast<double>(hits) / static_cast<double>(preds.size());
      ok = opts.strict ? frac > opts.threshold : frac >= opts.threshold;
    }
    r.success.push_back(ok);
    r.n_success += ok;
  }
  r.trials = std::move(trials);
  r.success_rate =
      static_cast<double>(r.n_success) / static_cast<double>(r.success.size());
  return r;
}

PseudoOnlineResult run_pseudo_online(FcdnModel& m, const EegDataset& ds,
                                     int n_runs, int trials_per_class_per_run,
                                     std::uint64_t seed, const WindowPlan& plan,
                                     double threshold, bool strict) {
  require(n_runs >= 1, "pseudo-online: need at least one run");
  require(trials_per_class_per_run >= 1, "pseudo-online: need trials per class");
  ds.validate();
  require(std::abs(ds.fs - m.cfg.fs) < 1e-9, "pseudo-online: sampling rate mismatch");

  // Filter everything once; trials are then streamed from the banded copy.
  const BandedDataset bd = band_split(ds, m.cfg.fir_order);
  const int k = ds.n_channels();
  const std::int64_t t_len = ds.samples_per_trial;

  PseudoOnlineResult out;
  for (int run = 0; run < n_runs; ++run) {
    std::vector<std::int64_t> ids;
    for (int c = 0; c < ds.n_classes(); ++c) {
      auto pool = ds.trials_of_class(c);
      require(static_cast<int>(pool.size()) >= trials_per_class_per_run,
              "pseudo-online: class '" + ds.class_names[static_cast<std::size_t>(c)] +
                  "' has too few trials");
      Rng rng(derive_seed(seed, {0x60, static_cast<std::uint64_t>(run),
                                 static_cast<std::uint64_t>(c)}));
      rng.shuffle(pool);
      ids.insert(ids.end(), pool.begin(), pool.begin() + trials_per_class_per_run);
    }

    std::vector<TrialStreamResult> streams;
    std::vector<int> labels;
    for (std::int64_t id : ids) {
      std::array<Tensor<float>, kNumBands> bands;
      for (int b = 0; b < kNumBands; ++b) {
        bands[b] = Tensor<float>({1, 1, k, t_len});
        for (int ch = 0; ch < k; ++ch) {
          const auto src = bd.bands[b].trial_channel(id, ch);
          std::copy(src.begin(), src.end(), bands[b].data.data() + ch * t_len);
        }
      }
      streams.push_back(stream_windows(m, bands, ds.fs, plan));
      labels.push_back(ds.labels[static_cast<std::size_t>(id)]);
    }

    RunResult avg = score_run(streams, labels,
                              {FusionCriterion::prob_average, threshold, strict},
                              run + 1);
    avg.trial_ids = ids;
    RunResult maj = score_run(std::move(streams), labels,
                              {FusionCriterion::window_majority, threshold, strict},
                              run + 1);
    maj.trial_ids = ids;
    out.avg_success += avg.success_rate;
    out.avg_success_majority += maj.success_rate;
    out.runs.push_back(std::move(avg));
    out.runs_majority.push_back(std::move(maj));
  }
  out.avg_success /= static_cast<double>(n_runs);
  out.avg_success_majority /= static_cast<double>(n_runs);
  return out;
}

std::string run_to_json(const RunResult& r) {
  json j;
  j["schema_version"] = 1;
  j["run_index"] = r.run_index;
  j["criterion"] = r.criterion;
  j["trial_ids"] = r.trial_ids;
  j["labels"] = r.labels;
  j["n_success"] = r.n_success;
  j["success_rate"] = r.success_rate;
  json trials = json::array();
  for (std::size_t t = 0; t < r.trials.size(); ++t) {
    json jt;
    jt["window_proba"] = r.trials[t].window_proba;
    jt["window_pred"] = r.trials[t].window_pred;
    jt["fused_proba"] = r.trials[t].fused_proba;
    jt["decision"] = r.trials[t].decision;
    jt["tie"] = r.trials[t].tie;
    jt["success"] = static_cast<bool>(r.success[t]);
    trials.push_back(std::move(jt));
  }
  j["trials"] = trials;
  return j.dump(2) + "\n";
}

void write_run_json(const RunResult& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << run_to_json(r);
  if (!out) throw IoError("write failed: " + path.string());
}

void write_success_grid_csv(const RunResult& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "class,trial_index,success\n";
  std::vector<int> seen(64, 0);
  for (std::size_t t = 0; t < r.labels.size(); ++t) {
    const int cls = r.labels[t];
    if (cls >= static_cast<int>(seen.size())) seen.resize(static_cast<std::size_t>(cls) + 1, 0);
    out << cls << "," << ++seen[static_cast<std::size_t>(cls)] << ","
        << (r.success[t] ? 1 : 0) << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_run_table_csv(std::span<const RunResult> runs,
                         const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "run,criterion,success_rate,successes,trials\n";
  char buf[160];
  double mean = 0.0;
  std::int64_t total_s = 0, total_n = 0;
  for (const auto& r : runs) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%lld,%zu\n", r.run_index,
                  r.criterion.c_str(), r.success_rate,
                  static_cast<long long>(r.n_success), r.success.size());
    out << buf;
    mean += r.success_rate;
    total_s += r.n_success;
    total_n += static_cast<std::int64_t>(r.success.size());
  }
  if (!runs.empty()) {
    std::snprintf(buf, sizeof buf, "average,%s,%.6f,%lld,%lld\n",
                  runs[0].criterion.c_str(), mean / static_cast<double>(runs.size()),
                  static_cast<long long>(total_s), static_cast<long long>(total_n));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fcdn
