#include "fcdn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fcdn/error.hpp"
#include "fcdn/rng.hpp"

namespace fcdn {

using json = nlohmann::json;

EegDataset augment_gaussian(const EegDataset& ds, int copies, double sigma_frac,
                            std::uint64_t seed) {
  ds.validate();
  require(copies >= 0, "augment: copies must be non-negative");
  require(sigma_frac >= 0.0, "augment: sigma_frac must be non-negative");
  if (copies == 0) return ds;

  const std::int64_t n = ds.n_trials();
  const int k = ds.n_channels();
  const std::int64_t t_len = ds.samples_per_trial;

  EegDataset out = ds;
  out.labels.reserve(static_cast<std::size_t>(n) * (copies + 1));
  out.samples.reserve(ds.samples.size() * static_cast<std::size_t>(copies + 1));
  for (int c = 0; c < copies; ++c) {
    for (std::int64_t t = 0; t < n; ++t) {
      Rng rng(derive_seed(seed, {0xA9, static_cast<std::uint64_t>(c),
                                 static_cast<std::uint64_t>(t)}));
      out.labels.push_back(ds.labels[static_cast<std::size_t>(t)]);
      for (int ch = 0; ch < k; ++ch) {
        const auto src = ds.trial_channel(t, ch);
        double mean = 0.0;
        for (float v : src) mean += v;
        mean /= static_cast<double>(t_len);
        double var = 0.0;
        for (float v : src) var += (v - mean) * (v - mean);
        const double sigma = sigma_frac * std::sqrt(var / static_cast<double>(t_len));
        for (float v : src)
          out.samples.push_back(static_cast<float>(v + rng.gaussian(0.0, sigma)));
      }
    }
  }
  out.append_provenance("augment_gaussian copies=" + std::to_string(copies) +
                        " sigma_frac=" + std::to_string(sigma_frac) +
                        " seed=" + std::to_string(seed));
  out.validate();
  return out;
}

EegDataset subset_trials(const EegDataset& ds, std::span<const std::int64_t> idx) {
  const std::int64_t n = ds.n_trials();
  const std::size_t stride =
      static_cast<std::size_t>(ds.n_channels()) * ds.samples_per_trial;

  EegDataset out = ds;
  out.labels.clear();
  out.samples.clear();
  out.labels.reserve(idx.size());
  out.samples.reserve(idx.size() * stride);
  for (std::int64_t t : idx) {
    require(t >= 0 && t < n, "subset: trial index out of range");
    out.labels.push_back(ds.labels[static_cast<std::size_t>(t)]);
    const float* base = ds.samples.data() + static_cast<std::size_t>(t) * stride;
    out.samples.insert(out.samples.end(), base, base + stride);
  }
  return out;
}

EegDataset concat_trials(std::span<const EegDataset> parts) {
  require(!parts.empty(), "concat: need at least one dataset");
  EegDataset out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const EegDataset& p = parts[i];
    require(p.montage.channel_names == out.montage.channel_names,
            "concat: channel sets differ");
    require(std::abs(p.fs - out.fs) < 1e-9, "concat: sampling rates differ");
    require(p.samples_per_trial == out.samples_per_trial,
            "concat: trial lengths differ");
    require(p.class_names == out.class_names, "concat: class sets differ");
    require(p.epoch_onset_sample == out.epoch_onset_sample,
            "concat: epoch onsets differ");
    out.subject_id += "+" + p.subject_id;
    out.labels.insert(out.labels.end(), p.labels.begin(), p.labels.end());
    out.samples.insert(out.samples.end(), p.samples.begin(), p.samples.end());
  }
  out.validate();
  return out;
}

EegDataset shuffle_labels(const EegDataset& ds, std::uint64_t seed) {
  EegDataset out = ds;
  Rng rng(derive_seed(seed, {0x5AB37}));
  rng.shuffle(out.labels);
  out.append_provenance("shuffle_labels seed=" + std::to_string(seed));
  return out;
}

void SplitPlan::validate() const {
  require(augment_copies >= 0, "split plan: augment_copies must be non-negative");
  require(sigma_frac >= 0.0, "split plan: sigma_frac must be non-negative");
  switch (mode) {
    case SplitMode::holdout:
      require(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0,
              "split plan: holdout fractions must be positive");
      require(std::abs(train_frac + val_frac + test_frac - 1.0) < 1e-9,
              "split plan: holdout fractions must sum to 1");
      break;
    case SplitMode::kfold:
      require(k >= 2, "split plan: kfold needs k >= 2");
      require(val_frac > 0.0 && val_frac < 1.0,
              "split plan: kfold val_frac must be in (0,1)");
      break;
    case SplitMode::loso:
      break;
  }
}

namespace {

// Per-class trial indices, each list shuffled by a seed derived from the
// class, so a split never depends on how trials happen to be ordered.
std::vector<std::vector<std::int64_t>> shuffled_class_indices(const EegDataset& ds,
                                                              std::uint64_t seed) {
  std::vector<std::vector<std::int64_t>> by_class(
      static_cast<std::size_t>(ds.n_classes()));
  for (std::int64_t t = 0; t < ds.n_trials(); ++t)
    by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(t)])]
        .push_back(t);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    Rng rng(derive_seed(seed, {0x51, c}));
    rng.shuffle(by_class[c]);
  }
  return by_class;
}

void sort_split(Split& s) {
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
}

}  // namespace

std::vector<Split> make_splits(const EegDataset& ds, const SplitPlan& plan) {
  ds.validate();
  plan.validate();
  auto by_class = shuffled_class_indices(ds, plan.seed);

  std::vector<Split> splits;
  if (plan.mode == SplitMode::holdout) {
    Split s;
    for (const auto& cls : by_class) {
      const auto n = static_cast<std::int64_t>(cls.size());
      const auto n_tr = std::llround(plan.train_frac * static_cast<double>(n));
      const auto n_va = std::llround(plan.val_frac * static_cast<double>(n));
      const auto n_te = n - n_tr - n_va;
      require(n_tr >= 1 && n_va >= 1 && n_te >= 1,
              "split: a class has too few trials for a stratified holdout");
      s.train.insert(s.train.end(), cls.begin(), cls.begin() + n_tr);
      s.val.insert(s.val.end(), cls.begin() + n_tr, cls.begin() + n_tr + n_va);
      s.test.insert(s.test.end(), cls.begin() + n_tr + n_va, cls.end());
    }
    sort_split(s);
    splits.push_back(std::move(s));
  } else if (plan.mode == SplitMode::kfold) {
    for (const auto& cls : by_class)
      require(static_cast<int>(cls.size()) >= plan.k,
              "split: a class has fewer trials than folds");
    splits.resize(static_cast<std::size_t>(plan.k));
    for (int f = 0; f < plan.k; ++f) {
      Split& s = splits[static_cast<std::size_t>(f)];
      for (const auto& cls : by_class) {
        // Round-robin deal: trial j of this class belongs to fold j % k.
        std::vector<std::int64_t> rest;
        for (std::size_t j = 0; j < cls.size(); ++j) {
          if (static_cast<int>(j % static_cast<std::size_t>(plan.k)) == f)
            s.test.push_back(cls[j]);
          else
            rest.push_back(cls[j]);
        }
        const auto n_va = std::max<std::int64_t>(
            1, std::llround(plan.val_frac * static_cast<double>(rest.size())));
        require(static_cast<std::int64_t>(rest.size()) - n_va >= 1,
                "split: a class has too few trials to carve a validation set");
        s.val.insert(s.val.end(), rest.begin(), rest.begin() + n_va);
        s.train.insert(s.train.end(), rest.begin() + n_va, rest.end());
      }
      sort_split(s);
    }
  } else {
    throw ValidationError("split: subject-level folds are produced by run_loso");
  }
  return splits;
}

void EvalReport::validate() const {
  for (double a : fold_acc)
    require(a >= 0.0 && a <= 1.0, "report: fold accuracy out of [0,1]");
  if (!fold_acc.empty())
    require(mean_acc >= 0.0 && mean_acc <= 1.0, "report: mean accuracy out of [0,1]");
  const auto c = static_cast<std::size_t>(n_classes());
  if (!confusion.empty())
    require(confusion.size() == c * c, "report: confusion matrix shape mismatch");
  if (!per_class_acc.empty())
    require(per_class_acc.size() == c, "report: per-class accuracy shape mismatch");
}

namespace {

json report_json(const EvalReport& r) {
  json j;
  j["schema_version"] = 1;
  j["name"] = r.name;
  j["class_names"] = r.class_names;
  j["fold_acc"] = r.fold_acc;
  j["mean_acc"] = r.mean_acc;
  j["std_acc"] = r.std_acc;
  json conf = json::array();
  const int c = r.n_classes();
  if (!r.confusion.empty())
    for (int i = 0; i < c; ++i) {
      json row = json::array();
      for (int k = 0; k < c; ++k)
        row.push_back(r.confusion[static_cast<std::size_t>(i) * c + k]);
      conf.push_back(row);
    }
  j["confusion"] = conf;
  j["per_class_acc"] = r.per_class_acc;
  if (std::isfinite(r.ablation_delta)) j["ablation_delta"] = r.ablation_delta;
  if (std::isfinite(r.permutation_p)) j["permutation_p"] = r.permutation_p;
  j["config_fingerprint"] = r.config_fingerprint;
  j["notes"] = r.notes;
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
  r.validate();
  return report_json(r).dump(2) + "\n";
}

void write_report_json(const EvalReport& r, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << report_to_json(r);
  if (!out) throw IoError("write failed: " + path.string());
}

void write_report_csv(std::span<const EvalReport> reports,
                      const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "subject,mean_accuracy,std_accuracy\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f\n", r.name.c_str(), r.mean_acc,
                  r.std_acc);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

double evaluate_model(FcdnModel& m, const EegDataset& test,
                      std::vector<std::int64_t>* confusion) {
  require(m.fitted, "evaluate: model has not been fitted");
  const BandedDataset bd = band_split(test, m.cfg.fir_order);
  const auto proba = predict_proba(m, bd);
  const int c = m.cfg.n_classes;
  if (confusion != nullptr && confusion->empty())
    confusion->assign(static_cast<std::size_t>(c) * c, 0);
  std::int64_t hits = 0;
  for (std::size_t t = 0; t < proba.size(); ++t) {
    const auto& p = proba[t];
    const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    const int truth = test.labels[t];
    if (pred == truth) ++hits;
    if (confusion != nullptr)
      ++(*confusion)[static_cast<std::size_t>(truth) * c + pred];
  }
  return proba.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(proba.size());
}

namespace {

void finalize_stats(EvalReport& r) {
  const auto n = static_cast<double>(r.fold_acc.size());
  if (n > 0) {
    r.mean_acc = std::accumulate(r.fold_acc.begin(), r.fold_acc.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : r.fold_acc) ss += (a - r.mean_acc) * (a - r.mean_acc);
    r.std_acc = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  const int c = r.n_classes();
  if (!r.confusion.empty()) {
    r.per_class_acc.assign(static_cast<std::size_t>(c), 0.0);
    for (int i = 0; i < c; ++i) {
      std::int64_t row = 0;
      for (int k = 0; k < c; ++k) row += r.confusion[static_cast<std::size_t>(i) * c + k];
      if (row > 0)
        r.per_class_acc[static_cast<std::size_t>(i)] =
            static_cast<double>(r.confusion[static_cast<std::size_t>(i) * c + i]) /
            static_cast<double>(row);
    }
  }
}

EvalReport run_cv_impl(const EegDataset& ds, const SplitPlan& plan,
                       const FcdnConfig& cfg, std::uint64_t seed,
                       bool uniform_weights, const std::string& name) {
  const auto t0 = std::chrono::steady_clock::now();
  EvalReport r;
  r.name = name;
  r.class_names = ds.class_names;
  r.config_fingerprint = cfg.fingerprint();

  EegDataset working = ds;
  const std::uint64_t aug_seed = derive_seed(plan.seed, {0xA6});
  if (plan.augment_before_split && plan.augment_copies > 0) {
    working = augment_gaussian(ds, plan.augment_copies, plan.sigma_frac, aug_seed);
    r.notes.push_back(
        "augment-before-split: noisy copies of evaluation trials can appear in "
        "training, scores are optimistic");
    std::fprintf(stderr,
                 "warning: augmenting before the split lets near-duplicates of "
                 "test trials into training; scores will be optimistic\n");
  }

  const auto splits = make_splits(working, plan);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    EegDataset train = subset_trials(working, splits[f].train);
    if (!plan.augment_before_split && plan.augment_copies > 0)
      train = augment_gaussian(train, plan.augment_copies, plan.sigma_frac,
                               derive_seed(aug_seed, {f}));
    const EegDataset val = subset_trials(working, splits[f].val);
    const EegDataset test = subset_trials(working, splits[f].test);
    try {
      FitResult fit = fit_fcdn(train, val, cfg, derive_seed(seed, {0xCF, f}),
                               uniform_weights);
      r.fold_acc.push_back(evaluate_model(fit.model, test, &r.confusion));
    } catch (const Error& e) {
      r.notes.push_back("fold " + std::to_string(f) + " failed: " + e.what());
    }
  }
  finalize_stats(r);
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.validate();
  return r;
}

}  // namespace

EvalReport run_cv(const EegDataset& ds, const SplitPlan& plan,
                  const FcdnConfig& cfg, std::uint64_t seed) {
  return run_cv_impl(ds, plan, cfg, seed, false,
                     plan.mode == SplitMode::holdout ? "holdout" : "cv");
}

std::vector<EvalReport> run_loso(std::span<const EegDataset> subjects,
                                 const FcdnConfig& cfg, std::uint64_t seed,
                                 int augment_copies, double sigma_frac) {
  require(subjects.size() >= 2, "loso: need at least two subjects");
  std::vector<EvalReport> reports;
  for (std::size_t target = 0; target < subjects.size(); ++target) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<EegDataset> sources;
    for (std::size_t s = 0; s < subjects.size(); ++s)
      if (s != target) sources.push_back(subjects[s]);
    const EegDataset pool = concat_trials(sources);

    // Stratified 80/20 train/val over the source pool; the target subject
    // contributes nothing until final scoring.
    auto by_class = shuffled_class_indices(pool, derive_seed(seed, {0x105, target}));
    std::vector<std::int64_t> tr_idx, va_idx;
    for (const auto& cls : by_class) {
      const auto n_va = std::max<std::int64_t>(
          1, std::llround(0.2 * static_cast<double>(cls.size())));
      require(static_cast<std::int64_t>(cls.size()) > n_va,
              "loso: a class has too few source trials");
      va_idx.insert(va_idx.end(), cls.begin(), cls.begin() + n_va);
      tr_idx.insert(tr_idx.end(), cls.begin() + n_va, cls.end());
    }
    std::sort(tr_idx.begin(), tr_idx.end());
    std::sort(va_idx.begin(), va_idx.end());

    EegDataset train = subset_trials(pool, tr_idx);
    if (augment_copies > 0)
      train = augment_gaussian(train, augment_copies, sigma_frac,
                               derive_seed(seed, {0xA6, target}));
    const EegDataset val = subset_trials(pool, va_idx);

    EvalReport r;
    r.name = "loso:" + subjects[target].subject_id;
    r.class_names = subjects[target].class_names;
    r.config_fingerprint = cfg.fingerprint();
    try {
      FitResult fit =
          fit_fcdn(train, val, cfg, derive_seed(seed, {0x7A16, target}));
      r.fold_acc.push_back(evaluate_model(fit.model, subjects[target], &r.confusion));
    } catch (const Error& e) {
      r.notes.push_back("target " + subjects[target].subject_id + " failed: " + e.what());
    }
    finalize_stats(r);
    r.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.validate();
    reports.push_back(std::move(r));
  }
  return reports;
}

AblationResult run_ablation(const EegDataset& ds, const SplitPlan& plan,
                            const FcdnConfig& cfg, AblationMode mode,
                            std::uint64_t seed) {
  AblationResult out;
  out.full = run_cv_impl(ds, plan, cfg, seed, false, "full");

  if (mode == AblationMode::no_fc) {
    out.ablated = run_cv_impl(ds, plan, cfg, seed, true, "no-fc");
  } else {
    const EegDataset reduced = drop_channels(ds, "occipital");
    FcdnConfig cfg2 = cfg;
    cfg2.n_channels = reduced.n_channels();
    out.ablated = run_cv_impl(reduced, plan, cfg2, seed, false, "no-occipital");
  }

  out.delta = out.full.mean_acc - out.ablated.mean_acc;
  out.full.ablation_delta = out.delta;
  out.ablated.ablation_delta = out.delta;
  if (out.full.fold_acc.size() == out.ablated.fold_acc.size() &&
      out.full.fold_acc.size() >= 2) {
    const double p = paired_permutation_test(out.full.fold_acc, out.ablated.fold_acc,
                                             10000, derive_seed(seed, {0x9E}));
    out.full.permutation_p = p;
    out.ablated.permutation_p = p;
  }
  return out;
}

double paired_permutation_test(std::span<const double> acc_a,
                               std::span<const double> acc_b, int n_perm,
                               std::uint64_t seed) {
  require(acc_a.size() == acc_b.size(), "permutation test: length mismatch");
  const auto n = acc_a.size();
  require(n >= 2, "permutation test: need at least two pairs");
  require(n_perm >= 1, "permutation test: n_perm must be positive");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = acc_a[i] - acc_b[i];
  const double inv_n = 1.0 / static_cast<double>(n);
  double obs = 0.0;
  for (double v : d) obs += v;
  obs = std::abs(obs * inv_n);
  const double tol = 1e-12;

  // Mean of sign-flipped differences for one +/- pattern.
  auto stat_of = [&](auto sign_of) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += sign_of(i) ? d[i] : -d[i];
    return std::abs(s * inv_n);
  };

  if (n < 63 && (std::uint64_t{1} << n) <= static_cast<std::uint64_t>(n_perm)) {
    const std::uint64_t total = std::uint64_t{1} << n;
    std::uint64_t count = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask)
      if (stat_of([&](std::size_t i) { return ((mask >> i) & 1u) == 0; }) >= obs - tol)
        ++count;
    return static_cast<double>(count) / static_cast<double>(total);
  }

  Rng rng(derive_seed(seed, {0x9347}));
  std::int64_t count = 1;  // the identity pattern
  std::vector<bool> signs(n);
  for (int p = 1; p < n_perm; ++p) {
    for (std::size_t i = 0; i < n; ++i) signs[i] = rng.uniform() < 0.5;
    if (stat_of([&](std::size_t i) { return static_cast<bool>(signs[i]); }) >= obs - tol)
      ++count;
  }
  return static_cast<double>(count) / static_cast<double>(n_perm);
}

namespace {

const char* stage_name(FeatureStage s) {
  switch (s) {
    case FeatureStage::post_conv1: return "post-conv1";
    case FeatureStage::post_conv2: return "post-conv2";
    case FeatureStage::post_conv3: return "post-conv3";
    case FeatureStage::pre_head: return "pre-head";
  }
  throw ValidationError("export: unknown feature stage");
}

const char* stage_layer(FeatureStage s) {
  switch (s) {
    case FeatureStage::post_conv1: return "bn1";
    case FeatureStage::post_conv2: return "elu2";
    case FeatureStage::post_conv3: return "elu3";
    default: return nullptr;
  }
}

}  // namespace

void export_features(FcdnModel& m, const EegDataset& ds, FeatureStage stage,
                     const std::filesystem::path& path, int proj_dim,
                     std::uint64_t seed) {
  require(m.fitted, "export: model has not been fitted");
  require(proj_dim >= 1, "export: projection size must be positive");
  const BandedDataset bd = band_split(ds, m.cfg.fir_order);
  const std::int64_t n = bd.n_trials();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());

  bool wrote_header = false;
  std::int64_t flat_dim = 0;
  bool project = false;
  char buf[64];

  const int batch = 32;
  std::vector<std::int64_t> idx;
  std::vector<double> flat, row;
  for (std::int64_t lo = 0; lo < n; lo += batch) {
    const std::int64_t hi = std::min<std::int64_t>(n, lo + batch);
    idx.resize(static_cast<std::size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const auto bands = gather_bands(bd, idx);
    fcdn_forward(m, bands, nn::Mode::eval, nullptr);

    const std::int64_t b_sz = hi - lo;
    for (std::int64_t bi = 0; bi < b_sz; ++bi) {
      flat.clear();
      if (stage == FeatureStage::pre_head) {
        const auto& act = m.trunk.activation("ln_f");  // [B, tokens, D]
        const auto d = act.dim(2);
        const float* cls = act.data.data() + (bi * act.dim(1)) * d;
        flat.insert(flat.end(), cls, cls + d);
      } else {
        for (int b = 0; b < kNumBands; ++b) {
          const auto& act = m.conv[b].activation(stage_layer(stage));
          const std::int64_t per = act.numel() / act.dim(0);
          const float* base = act.data.data() + bi * per;
          flat.insert(flat.end(), base, base + per);
        }
      }

      if (!wrote_header) {
        flat_dim = static_cast<std::int64_t>(flat.size());
        project = flat_dim > proj_dim;
        const std::int64_t out_dim = project ? proj_dim : flat_dim;
        out << "# stage=" << stage_name(stage)
            << " projection=" << (project ? "sparse_sign" : "none")
            << " seed=" << seed << " input_dim=" << flat_dim
            << " output_dim=" << out_dim << "\n";
        out << "label";
        for (std::int64_t j = 0; j < out_dim; ++j) out << ",f" << j;
        out << "\n";
        wrote_header = true;
      }

      if (project) {
        // Each input coordinate lands in one seeded bucket with a random
        // sign: a sparse projection cheap enough for full conv maps.
        row.assign(static_cast<std::size_t>(proj_dim), 0.0);
        for (std::size_t i = 0; i < flat.size(); ++i) {
          const std::uint64_t h = derive_seed(seed, {0xFE, i});
          const auto bucket = static_cast<std::size_t>(
              h % static_cast<std::uint64_t>(proj_dim));
          row[bucket] += ((h >> 32) & 1u) ? flat[i] : -flat[i];
        }
      } else {
        row = flat;
      }

      out << ds.labels[static_cast<std::size_t>(lo + bi)];
      for (double v : row) {
        std::snprintf(buf, sizeof buf, ",%.6g", v);
        out << buf;
      }
      out << "\n";
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void export_topography(FcdnModel& m, const EegDataset& ds,
                       const std::filesystem::path& path) {
  require(m.fitted, "export: model has not been fitted");
  const BandedDataset bd = band_split(ds, m.cfg.fir_order);
  const std::int64_t n = bd.n_trials();
  const int k = m.cfg.n_channels;

  std::vector<double> accum(static_cast<std::size_t>(k), 0.0);
  std::int64_t terms = 0;
  const int batch = 32;
  std::vector<std::int64_t> idx;
  for (std::int64_t lo = 0; lo < n; lo += batch) {
    const std::int64_t hi = std::min<std::int64_t>(n, lo + batch);
    idx.resize(static_cast<std::size_t>(hi - lo));
    std::iota(idx.begin(), idx.end(), lo);
    const auto bands = gather_bands(bd, idx);
    ForwardCache cache;
    fcdn_forward(m, bands, nn::Mode::eval, &cache);
    for (int b = 0; b < kNumBands; ++b) {
      const auto& conv = cache.conv_out[b];  // [B, C3, K, 1]
      const std::int64_t bsz = conv.dim(0), c3 = conv.dim(1);
      for (std::int64_t t = 0; t < bsz; ++t)
        for (std::int64_t c = 0; c < c3; ++c) {
          const float* base = conv.data.data() + ((t * c3 + c) * k);
          for (int ch = 0; ch < k; ++ch)
            accum[static_cast<std::size_t>(ch)] += std::abs(base[ch]);
        }
      terms += bsz * c3;
    }
  }

  const auto& names =
      m.channel_names.empty() ? ds.montage.channel_names : m.channel_names;
  require(static_cast<int>(names.size()) == k, "export: channel name count mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "channel,value\n";
  char buf[96];
  for (int ch = 0; ch < k; ++ch) {
    std::snprintf(buf, sizeof buf, "%s,%.6g\n", names[static_cast<std::size_t>(ch)].c_str(),
                  terms > 0 ? accum[static_cast<std::size_t>(ch)] / static_cast<double>(terms)
                            : 0.0);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fcdn
