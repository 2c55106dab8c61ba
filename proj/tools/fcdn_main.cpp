// Command-line front end for the whole pipeline: synthetic data, filtering,
// connectivity, training, evaluation protocols and analysis exports. One
// subcommand per stage; every artifact carries the resolved configuration
// (or its hash) so runs can be audited and reproduced.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fcdn/checkpoint.hpp"
#include "fcdn/connectivity.hpp"
#include "fcdn/dsp.hpp"
#include "fcdn/error.hpp"
#include "fcdn/gradcheck.hpp"
#include "fcdn/harness.hpp"
#include "fcdn/hashing.hpp"
#include "fcdn/model.hpp"
#include "fcdn/rng.hpp"
#include "fcdn/streaming.hpp"
#include "fcdn/synth.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw fcdn::IoError("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hash_of(const json& j) {
  fcdn::Fnv1a h;
  h.update(j.dump());
  return fcdn::hex64(h.digest());
}

// Preset defaults overridden by an optional JSON file; unknown keys rejected.
fcdn::FcdnConfig resolve_model_config(const std::string& preset,
                                      const std::string& config_path) {
  fcdn::FcdnConfig base =
      preset == "paper" ? fcdn::paper_config() : fcdn::desk_config();
  if (config_path.empty()) return base;
  json merged = json::parse(base.to_json());
  json overrides = json::parse(read_file(config_path));
  fcdn::require(overrides.is_object(), "config: JSON root must be an object");
  merged.merge_patch(overrides);
  return fcdn::FcdnConfig::from_json(merged.dump());
}

fcdn::BandDefinition band_by_name(const std::string& name) {
  for (const auto& b : fcdn::BandDefinition::standard_bands())
    if (b.name == name) return b;
  throw fcdn::ValidationError("unknown band '" + name + "'");
}

std::string preprocess_token(const fcdn::EegDataset& ds) {
  const auto pos = ds.provenance.find("preprocess_hash=");
  if (pos == std::string::npos) return "";
  const auto end = ds.provenance.find_first_of("; ", pos);
  return ds.provenance.substr(pos + 16,
                              end == std::string::npos ? end : end - pos - 16);
}

// Cue-relative cropping shared by the trial-consuming commands: datasets are
// usually stored with generous pre/post margins and cropped to the model's
// input window here. end <= start leaves the data untouched.
struct EpochOpts {
  double start_s = 0.0, end_s = 0.0;

  bool active() const { return end_s > start_s; }
};

void add_epoch_options(CLI::App* cmd, EpochOpts& e) {
  cmd->add_option("--epoch-start", e.start_s,
                  "crop start in seconds relative to cue onset");
  cmd->add_option("--epoch-end", e.end_s,
                  "crop end in seconds relative to cue onset");
}

fcdn::EegDataset load_epoched(const std::string& path, const EpochOpts& e) {
  fcdn::EegDataset ds = fcdn::load_dataset(path);
  if (e.active()) ds = fcdn::extract_epoch(ds, e.start_s, e.end_s, true);
  return ds;
}

// Writes the resolved per-command parameters next to the artifacts.
void stamp_config(const fs::path& out_dir, const std::string& command,
                  const json& resolved) {
  json j = resolved;
  j["command"] = command;
  j["config_hash"] = hash_of(resolved);
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / ("config." + command + ".json"),
                    std::ios::binary | std::ios::trunc);
  if (!out) throw fcdn::IoError("cannot write config stamp in " + out_dir.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
  std::string preset = "desk";
  std::string variant = "default";
  std::string config_path;
  std::string out = "data";
  std::uint64_t seed = 0;
  int subjects = 0;  // 0 -> preset default
  int trials = 0;
};

int cmd_synth(const SynthOpts& o) {
  fcdn::SynthConfig cfg;
  if (!o.config_path.empty()) {
    cfg = fcdn::SynthConfig::from_json(json::parse(read_file(o.config_path)));
  } else if (o.variant == "coupling-only") {
    cfg = fcdn::coupling_only_config(o.seed);
  } else if (o.variant == "occipital-alpha") {
    cfg = fcdn::occipital_alpha_config(o.seed);
  } else if (o.variant == "default") {
    cfg = o.preset == "paper" ? fcdn::paper_synth_config(o.seed)
                              : fcdn::desk_synth_config(o.seed);
  } else {
    throw fcdn::ValidationError("unknown synth variant '" + o.variant + "'");
  }
  cfg.seed = o.seed;
  if (o.subjects > 0) cfg.n_subjects = o.subjects;
  if (o.trials > 0) cfg.trials_per_class = o.trials;
  cfg.validate();

  const fs::path out_dir(o.out);
  stamp_config(out_dir, "synth", cfg.to_json());
  for (int s = 0; s < cfg.n_subjects; ++s) {
    const fcdn::EegDataset ds = fcdn::generate_subject(cfg, s);
    const fs::path path = out_dir / (ds.subject_id + ".fcdn");
    fcdn::save_dataset(ds, path);
    std::printf("wrote %s (%lld trials, %d channels, %.0f Hz)\n",
                path.string().c_str(), static_cast<long long>(ds.n_trials()),
                ds.n_channels(), ds.fs);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOpts {
  std::string in;
  std::string out = "preprocessed";
  double target_fs = 250.0;
  double notch_hz = 60.0;
  double notch_q = 30.0;
  int fir_order = 30;
  std::string out_clean;  // optional full-band output after resample+notch
};

int cmd_preprocess(const PreprocessOpts& o) {
  fcdn::EegDataset ds = fcdn::load_dataset(o.in);

  json resolved = {{"target_fs", o.target_fs},
                   {"notch_hz", o.notch_hz},
                   {"notch_q", o.notch_q},
                   {"fir_order", o.fir_order}};
  const std::string h = hash_of(resolved);

  if (ds.fs > o.target_fs + 1e-9) {
    const double ratio = ds.fs / o.target_fs;
    const int factor = static_cast<int>(std::llround(ratio));
    fcdn::require(std::abs(ratio - factor) < 1e-9,
                  "preprocess: sampling rate is not an integer multiple of the target");
    ds = fcdn::resample_decimate(ds, factor);
  }
  if (o.notch_hz > 0.0 && o.notch_hz < ds.fs / 2.0)
    ds = fcdn::notch_filter(ds, o.notch_hz, o.notch_q);
  ds.append_provenance("preprocess_hash=" + h);

  const fs::path out_dir(o.out);
  stamp_config(out_dir, "preprocess", resolved);
  const std::string stem = fs::path(o.in).stem().string();
  if (!o.out_clean.empty()) fcdn::save_dataset(ds, o.out_clean);
  for (const auto& band : fcdn::BandDefinition::standard_bands()) {
    fcdn::EegDataset banded = fcdn::bandpass_filter(ds, band, o.fir_order);
    const fs::path path = out_dir / (stem + "." + band.name + ".fcdn");
    fcdn::save_dataset(banded, path);
    std::printf("wrote %s\n", path.string().c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------
// plv

struct PlvOpts {
  std::string in;
  std::string out = "plv";
  std::string band = "alpha";
  bool prefiltered = false;
  int fir_order = 30;
  int edge_trim = fcdn::kPlvEdgeTrim;
};

int cmd_plv(const PlvOpts& o) {
  const fcdn::EegDataset ds = fcdn::load_dataset(o.in);
  const auto band = band_by_name(o.band);

  fcdn::PhaseTensor phases =
      o.prefiltered
          ? fcdn::analytic_phase(ds, band, 0)  // no refiltering, phase only
          : fcdn::analytic_phase(ds, band, o.fir_order);
  phases = fcdn::trim_phase_edges(phases, o.edge_trim);
  const fcdn::PlvMatrix plv = fcdn::plv_matrix(phases);
  const auto strength = fcdn::channel_strength(plv);
  const fcdn::ChannelWeights weights = fcdn::normalize_weights(
      strength, band, fcdn::dataset_fingerprint(ds));

  const fs::path out_dir(o.out);
  stamp_config(out_dir, "plv",
               {{"band", o.band},
                {"fir_order", o.prefiltered ? 0 : o.fir_order},
                {"edge_trim", o.edge_trim}});
  fcdn::export_plv_csv(plv, out_dir / "plv.csv");
  fcdn::export_weights_csv(weights, ds.montage.channel_names, out_dir / "weights.csv");
  std::printf("wrote %s and %s (%d channels, %lld trials)\n",
              (out_dir / "plv.csv").string().c_str(),
              (out_dir / "weights.csv").string().c_str(), plv.n_channels,
              static_cast<long long>(plv.n_trials));
  if (weights.degenerate)
    std::printf("note: degenerate strengths, weights fell back to uniform\n");
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
  std::string data;
  std::string preset = "desk";
  std::string config_path;
  std::string out = "model.ckpt";
  std::uint64_t seed = 0;
  double val_frac = 0.2;
  EpochOpts epoch;
  int augment_copies = 0;
  double sigma_frac = 0.1;
};

int cmd_train(const TrainOpts& o) {
  const fcdn::FcdnConfig cfg = resolve_model_config(o.preset, o.config_path);
  const fcdn::EegDataset ds = load_epoched(o.data, o.epoch);
  fcdn::require(o.val_frac > 0.0 && o.val_frac < 1.0,
                "train: val fraction must be in (0,1)");

  fcdn::SplitPlan plan;
  plan.mode = fcdn::SplitMode::holdout;
  plan.train_frac = 1.0 - o.val_frac - 1e-12;
  plan.val_frac = o.val_frac / 2.0;
  plan.test_frac = o.val_frac / 2.0 + 1e-12;
  // A plain two-way split: the plan machinery is three-way, so fold val+test
  // together as the validation set.
  plan.seed = o.seed;
  const auto splits = fcdn::make_splits(ds, plan);
  std::vector<std::int64_t> va = splits[0].val;
  va.insert(va.end(), splits[0].test.begin(), splits[0].test.end());
  std::sort(va.begin(), va.end());

  fcdn::EegDataset train = fcdn::subset_trials(ds, splits[0].train);
  if (o.augment_copies > 0)
    train = fcdn::augment_gaussian(train, o.augment_copies, o.sigma_frac,
                                   fcdn::derive_seed(o.seed, {0xA6}));
  const fcdn::EegDataset val = fcdn::subset_trials(ds, va);

  fcdn::FitResult fit = fcdn::fit_fcdn(train, val, cfg, o.seed);
  fit.model.seed = o.seed;
  fcdn::save_checkpoint(fit.model, o.out);
  std::printf("trained %d epochs, best val acc %.4f (epoch %d), wrote %s\n",
              fit.model.trained_epochs, fit.best_val_acc, fit.best_epoch,
              o.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
  std::string model;
  std::string data;
  std::string out;
  bool force = false;
  EpochOpts epoch;
};

int cmd_eval(const EvalOpts& o) {
  fcdn::FcdnModel m = fcdn::load_checkpoint(o.model);
  const fcdn::EegDataset ds = load_epoched(o.data, o.epoch);

  const std::string data_hash = preprocess_token(ds);
  if (data_hash != m.preprocess_hash && !o.force)
    throw fcdn::ValidationError(
        "eval: dataset preprocessing ('" + data_hash +
        "') does not match the checkpoint ('" + m.preprocess_hash +
        "'); pass --force to evaluate anyway");

  fcdn::EvalReport r;
  r.name = "eval";
  r.class_names = ds.class_names;
  r.config_fingerprint = m.cfg.fingerprint();
  r.fold_acc.push_back(fcdn::evaluate_model(m, ds, &r.confusion));
  r.mean_acc = r.fold_acc[0];
  for (int c = 0; c < r.n_classes(); ++c) {
    std::int64_t row = 0, hit = r.confusion[static_cast<std::size_t>(c) * r.n_classes() + c];
    for (int k = 0; k < r.n_classes(); ++k)
      row += r.confusion[static_cast<std::size_t>(c) * r.n_classes() + k];
    r.per_class_acc.push_back(row > 0 ? static_cast<double>(hit) / row : 0.0);
  }
  if (!o.out.empty()) fcdn::write_report_json(r, o.out);
  std::printf("accuracy %.4f over %lld trials\n", r.mean_acc,
              static_cast<long long>(ds.n_trials()));
  return 0;
}

// ---------------------------------------------------------------------------
// cv / loso / ablate

struct CvOpts {
  std::string data;
  std::string preset = "desk";
  std::string config_path;
  std::string out = "cv";
  std::string mode = "holdout";
  EpochOpts epoch;
  int k = 5;
  int augment_copies = 0;
  double sigma_frac = 0.1;
  bool augment_before_split = false;
  std::uint64_t seed = 0;
};

int cmd_cv(const CvOpts& o) {
  const fcdn::FcdnConfig cfg = resolve_model_config(o.preset, o.config_path);
  const fcdn::EegDataset ds = load_epoched(o.data, o.epoch);

  fcdn::SplitPlan plan;
  plan.mode = o.mode == "kfold" ? fcdn::SplitMode::kfold : fcdn::SplitMode::holdout;
  if (o.mode != "kfold" && o.mode != "holdout")
    throw fcdn::ValidationError("cv: mode must be holdout or kfold");
  plan.k = o.k;
  plan.augment_copies = o.augment_copies;
  plan.sigma_frac = o.sigma_frac;
  plan.augment_before_split = o.augment_before_split;
  plan.seed = o.seed;

  const fcdn::EvalReport r = fcdn::run_cv(ds, plan, cfg, o.seed);
  const fs::path out_dir(o.out);
  stamp_config(out_dir, "cv",
               {{"mode", o.mode},
                {"k", o.k},
                {"augment_copies", o.augment_copies},
                {"augment_before_split", o.augment_before_split},
                {"model", json::parse(cfg.to_json())}});
  fcdn::write_report_json(r, out_dir / "report.json");
  fcdn::write_report_csv({&r, 1}, out_dir / "report.csv");
  std::printf("%s accuracy %.4f +/- %.4f over %zu fold(s) in %.1f s\n",
              r.name.c_str(), r.mean_acc, r.std_acc, r.fold_acc.size(),
              r.runtime_s);
  return 0;
}

struct LosoOpts {
  std::vector<std::string> data;
  std::string preset = "desk";
  std::string config_path;
  std::string out = "loso";
  int augment_copies = 0;
  double sigma_frac = 0.1;
  EpochOpts epoch;
  std::uint64_t seed = 0;
};

int cmd_loso(const LosoOpts& o) {
  const fcdn::FcdnConfig cfg = resolve_model_config(o.preset, o.config_path);
  std::vector<fcdn::EegDataset> subjects;
  for (const auto& path : o.data) subjects.push_back(load_epoched(path, o.epoch));

  const auto reports =
      fcdn::run_loso(subjects, cfg, o.seed, o.augment_copies, o.sigma_frac);
  const fs::path out_dir(o.out);
  stamp_config(out_dir, "loso",
               {{"subjects", o.data},
                {"augment_copies", o.augment_copies},
                {"model", json::parse(cfg.to_json())}});
  for (const auto& r : reports) {
    std::string stem = r.name;
    std::replace(stem.begin(), stem.end(), ':', '_');
    fcdn::write_report_json(r, out_dir / (stem + ".json"));
    std::printf("%s accuracy %.4f\n", r.name.c_str(), r.mean_acc);
  }
  fcdn::write_report_csv(reports, out_dir / "loso.csv");
  return 0;
}

struct AblateOpts {
  std::string data;
  std::string preset = "desk";
  std::string config_path;
  std::string out = "ablation";
  std::string mode = "no-fc";
  EpochOpts epoch;
  std::string split = "holdout";
  int k = 5;
  int augment_copies = 0;
  std::uint64_t seed = 0;
};

int cmd_ablate(const AblateOpts& o) {
  const fcdn::FcdnConfig cfg = resolve_model_config(o.preset, o.config_path);
  const fcdn::EegDataset ds = load_epoched(o.data, o.epoch);

  fcdn::AblationMode mode;
  if (o.mode == "no-fc") mode = fcdn::AblationMode::no_fc;
  else if (o.mode == "no-occipital") mode = fcdn::AblationMode::no_occipital;
  else throw fcdn::ValidationError("ablate: mode must be no-fc or no-occipital");

  fcdn::SplitPlan plan;
  plan.mode = o.split == "kfold" ? fcdn::SplitMode::kfold : fcdn::SplitMode::holdout;
  if (o.split != "kfold" && o.split != "holdout")
    throw fcdn::ValidationError("ablate: split must be holdout or kfold");
  plan.k = o.k;
  plan.augment_copies = o.augment_copies;
  plan.seed = o.seed;

  const fcdn::AblationResult res = fcdn::run_ablation(ds, plan, cfg, mode, o.seed);
  const fs::path out_dir(o.out);
  stamp_config(out_dir, "ablate",
               {{"mode", o.mode},
                {"split", o.split},
                {"k", o.k},
                {"model", json::parse(cfg.to_json())}});
  fcdn::write_report_json(res.full, out_dir / "full.json");
  fcdn::write_report_json(res.ablated, out_dir / "ablated.json");
  const fcdn::EvalReport pair[] = {res.full, res.ablated};
  fcdn::write_report_csv(pair, out_dir / "ablation.csv");
  std::printf("full %.4f vs %s %.4f, delta %+.4f\n", res.full.mean_acc,
              res.ablated.name.c_str(), res.ablated.mean_acc, res.delta);
  return 0;
}

// ---------------------------------------------------------------------------
// pseudo-online

struct PseudoOpts {
  std::string model;
  std::string data;
  std::string out = "pseudo_online";
  int runs = 3;
  int trials_per_class = 10;
  double window_s = 2.0;
  double overlap = 0.5;
  double threshold = 0.75;
  bool strict = false;
  std::uint64_t seed = 0;
};

int cmd_pseudo_online(const PseudoOpts& o) {
  fcdn::FcdnModel m = fcdn::load_checkpoint(o.model);
  const fcdn::EegDataset ds = fcdn::load_dataset(o.data);

  fcdn::WindowPlan plan{o.window_s, o.overlap};
  const fcdn::PseudoOnlineResult res = fcdn::run_pseudo_online(
      m, ds, o.runs, o.trials_per_class, o.seed, plan, o.threshold, o.strict);

  const fs::path out_dir(o.out);
  stamp_config(out_dir, "pseudo-online",
               {{"runs", o.runs},
                {"trials_per_class", o.trials_per_class},
                {"window_s", o.window_s},
                {"overlap", o.overlap},
                {"threshold", o.threshold},
                {"strict", o.strict}});
  for (std::size_t i = 0; i < res.runs.size(); ++i) {
    const std::string n = "run" + std::to_string(i + 1);
    fcdn::write_run_json(res.runs[i], out_dir / (n + ".json"));
    fcdn::write_success_grid_csv(res.runs[i], out_dir / (n + "_grid.csv"));
  }
  fcdn::write_run_table_csv(res.runs, out_dir / "runs_prob_average.csv");
  fcdn::write_run_table_csv(res.runs_majority, out_dir / "runs_window_majority.csv");
  std::printf("prob-average success %.4f, window-majority success %.4f over %d runs\n",
              res.avg_success, res.avg_success_majority, o.runs);
  return 0;
}

// ---------------------------------------------------------------------------
// psd / ersp

struct PsdOpts {
  std::string in;
  std::string out = "psd.csv";
  std::string channel;
  double f_lo = 0.5;
  double f_hi = 50.0;
  double segment_s = 1.0;
  double overlap = 0.5;
};

int cmd_psd(const PsdOpts& o) {
  const fcdn::EegDataset ds = fcdn::load_dataset(o.in);
  const std::string channel =
      o.channel.empty() ? ds.montage.channel_names.at(0) : o.channel;
  const fcdn::Spectrum s =
      fcdn::welch_psd(ds, channel, o.f_lo, o.f_hi, o.segment_s, o.overlap);
  fcdn::export_spectrum_csv(s, o.out);
  std::printf("wrote %s (%zu bins, peak %.2f Hz)\n", o.out.c_str(),
              s.freq_hz.size(), s.peak_frequency(o.f_lo, o.f_hi));
  return 0;
}

struct ErspOpts {
  std::string in;
  std::string out = "ersp.csv";
  std::string channel;
  double f_lo = 0.5;
  double f_hi = 50.0;
};

int cmd_ersp(const ErspOpts& o) {
  const fcdn::EegDataset ds = fcdn::load_dataset(o.in);
  const std::string channel =
      o.channel.empty() ? ds.montage.channel_names.at(0) : o.channel;
  const fcdn::Ersp e = fcdn::compute_ersp(ds, channel, o.f_lo, o.f_hi);
  fcdn::export_ersp_csv(e, o.out);
  std::printf("wrote %s (%zu freqs x %zu times)\n", o.out.c_str(),
              e.freqs_hz.size(), e.times_s.size());
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

// A compact double-precision network touching every layer type the model
// uses: conv -> batch norm -> ELU -> pooling -> time collapse -> dropout,
// then patch embedding, a transformer block and token heads via a second
// graph checked separately.
int cmd_gradcheck(const std::string& preset) {
  const bool desk = preset != "paper";
  const int ch = desk ? 3 : 4, t_len = desk ? 40 : 56, k = desk ? 4 : 6;

  fcdn::nn::Graph<double> conv;
  conv.emplace<fcdn::nn::Conv2d<double>>("conv1", 1, ch, 1, 7, 1, 1,
                                         fcdn::nn::Padding::valid);
  conv.emplace<fcdn::nn::BatchNorm<double>>("bn1", ch);
  conv.emplace<fcdn::nn::Conv2d<double>>("conv2", ch, ch, 1, 5, 1, 1,
                                         fcdn::nn::Padding::same);
  conv.emplace<fcdn::nn::BatchNorm<double>>("bn2", ch);
  conv.emplace<fcdn::nn::Elu<double>>("elu1", 1.0);
  conv.emplace<fcdn::nn::AvgPool<double>>("pool", 1, 4, 1, 4);
  conv.emplace<fcdn::nn::Dropout<double>>("drop", 0.25);
  conv.emplace<fcdn::nn::AdaptiveAvgPoolTime<double>>("adapt", 1);
  conv.init_params(11);

  fcdn::nn::Tensor<double> x({4, 1, k, t_len});
  fcdn::Rng rng(17);
  for (auto& v : x.data) v = rng.gaussian();
  std::vector<int> labels = {0, 1, 2, 3};

  const auto r1 = fcdn::nn::grad_check(conv, x, labels);

  fcdn::nn::Graph<double> trunk;
  const int image = 16, patch = 8, dim = desk ? 16 : 24, heads = 2;
  trunk.emplace<fcdn::nn::PatchEmbed<double>>("patch_embed", 3, image, patch, dim,
                                              2, 1.0 / 255.0);
  trunk.emplace<fcdn::nn::TransformerBlock<double>>("block0", dim, heads, 2.0);
  trunk.emplace<fcdn::nn::LayerNorm<double>>("ln_f", dim);
  trunk.emplace<fcdn::nn::TokenHeads<double>>("heads", dim, 4, 2);
  trunk.init_params(13);
  for (auto& p : trunk.parameters())
    if (p->name.find("heads.") == 0)
      for (auto& v : p->value.data) v = rng.gaussian(0.0, 0.05);

  fcdn::nn::Tensor<double> img({2, 3, image, image});
  for (auto& v : img.data) v = rng.uniform(0.0, 255.0);
  std::vector<int> labels2 = {1, 3};
  const auto r2 = fcdn::nn::grad_check(trunk, img, labels2);

  const double worst = std::max(r1.max_rel_err, r2.max_rel_err);
  std::printf("conv stack max rel err %.3e (%s)\n", r1.max_rel_err,
              r1.worst_param.c_str());
  std::printf("transformer max rel err %.3e (%s)\n", r2.max_rel_err,
              r2.worst_param.c_str());
  std::printf("max relative error %.3e\n", worst);
  return worst < 1e-4 ? 0 : 2;
}

// ---------------------------------------------------------------------------
// export-features

struct ExportOpts {
  std::string model;
  std::string data;
  std::string out = "features.csv";
  std::string stage = "post-conv3";
  int proj_dim = 64;
  std::uint64_t seed = 0x7E57;
  bool topography = false;
};

int cmd_export_features(const ExportOpts& o) {
  fcdn::FcdnModel m = fcdn::load_checkpoint(o.model);
  const fcdn::EegDataset ds = fcdn::load_dataset(o.data);

  fcdn::FeatureStage stage;
  if (o.stage == "post-conv1") stage = fcdn::FeatureStage::post_conv1;
  else if (o.stage == "post-conv2") stage = fcdn::FeatureStage::post_conv2;
  else if (o.stage == "post-conv3") stage = fcdn::FeatureStage::post_conv3;
  else if (o.stage == "pre-head") stage = fcdn::FeatureStage::pre_head;
  else throw fcdn::ValidationError("export-features: unknown stage '" + o.stage + "'");

  fcdn::export_features(m, ds, stage, o.out, o.proj_dim, o.seed);
  std::printf("wrote %s\n", o.out.c_str());
  if (o.topography) {
    fs::path topo(o.out);
    topo.replace_extension(".topography.csv");
    fcdn::export_topography(m, ds, topo);
    std::printf("wrote %s\n", topo.string().c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"functional-connectivity-weighted EEG imagery decoder"};
  app.require_subcommand(1);

  SynthOpts synth;
  auto* c_synth = app.add_subcommand("synth", "generate synthetic EEG datasets");
  c_synth->add_option("--preset", synth.preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  c_synth->add_option("--variant", synth.variant,
                      "default | coupling-only | occipital-alpha");
  c_synth->add_option("--config", synth.config_path, "full generator config JSON");
  c_synth->add_option("--seed", synth.seed, "master seed");
  c_synth->add_option("--out", synth.out, "output directory");
  c_synth->add_option("--subjects", synth.subjects, "override subject count");
  c_synth->add_option("--trials", synth.trials, "override trials per class");

  PreprocessOpts pre;
  auto* c_pre = app.add_subcommand("preprocess",
                                   "resample, notch and split into band files");
  c_pre->add_option("--in", pre.in, "input dataset")->required();
  c_pre->add_option("--out", pre.out, "output directory");
  c_pre->add_option("--target-fs", pre.target_fs, "target sampling rate");
  c_pre->add_option("--notch", pre.notch_hz, "notch frequency, 0 disables");
  c_pre->add_option("--notch-q", pre.notch_q, "notch quality factor");
  c_pre->add_option("--fir-order", pre.fir_order, "band-pass FIR order");
  c_pre->add_option("--out-clean", pre.out_clean,
                    "also write the resampled+notched full-band dataset here");

  PlvOpts plv;
  auto* c_plv = app.add_subcommand("plv", "phase-locking matrix and channel weights");
  c_plv->add_option("--in", plv.in, "input dataset")->required();
  c_plv->add_option("--out", plv.out, "output directory");
  c_plv->add_option("--band", plv.band, "delta | theta | alpha");
  c_plv->add_flag("--prefiltered", plv.prefiltered,
                  "input is already band-filtered; skip refiltering");
  c_plv->add_option("--fir-order", plv.fir_order, "band-pass FIR order");
  c_plv->add_option("--edge-trim", plv.edge_trim, "phase samples trimmed per edge");

  TrainOpts train;
  auto* c_train = app.add_subcommand("train", "fit the decoder on one dataset");
  c_train->add_option("--data", train.data, "training dataset")->required();
  c_train->add_option("--preset", train.preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  c_train->add_option("--config", train.config_path, "model config overrides JSON");
  c_train->add_option("--out", train.out, "checkpoint path");
  c_train->add_option("--seed", train.seed, "master seed");
  c_train->add_option("--val-frac", train.val_frac, "validation fraction");
  c_train->add_option("--augment", train.augment_copies, "noisy copies per trial");
  c_train->add_option("--sigma-frac", train.sigma_frac, "augmentation noise fraction");
  add_epoch_options(c_train, train.epoch);

  EvalOpts eval;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  c_eval->add_option("--model", eval.model, "checkpoint path")->required();
  c_eval->add_option("--data", eval.data, "evaluation dataset")->required();
  c_eval->add_option("--out", eval.out, "report JSON path");
  add_epoch_options(c_eval, eval.epoch);
  c_eval->add_flag("--force", eval.force,
                   "evaluate even if preprocessing hashes mismatch");

  CvOpts cv;
  auto* c_cv = app.add_subcommand("cv", "holdout or k-fold evaluation");
  c_cv->add_option("--data", cv.data, "dataset")->required();
  c_cv->add_option("--preset", cv.preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  c_cv->add_option("--config", cv.config_path, "model config overrides JSON");
  c_cv->add_option("--out", cv.out, "output directory");
  c_cv->add_option("--mode", cv.mode, "holdout | kfold");
  c_cv->add_option("--k", cv.k, "fold count");
  c_cv->add_option("--augment", cv.augment_copies, "noisy copies per trial");
  c_cv->add_option("--sigma-frac", cv.sigma_frac, "augmentation noise fraction");
  c_cv->add_flag("--augment-before-split", cv.augment_before_split,
                 "augment the whole set before splitting (optimistic)");
  add_epoch_options(c_cv, cv.epoch);
  c_cv->add_option("--seed", cv.seed, "master seed");

  LosoOpts loso;
  auto* c_loso = app.add_subcommand("loso", "leave-one-subject-out evaluation");
  c_loso->add_option("--data", loso.data, "subject dataset files")
      ->required()
      ->expected(-2);
  c_loso->add_option("--preset", loso.preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  c_loso->add_option("--config", loso.config_path, "model config overrides JSON");
  c_loso->add_option("--out", loso.out, "output directory");
  c_loso->add_option("--augment", loso.augment_copies, "noisy copies per trial");
  c_loso->add_option("--sigma-frac", loso.sigma_frac, "augmentation noise fraction");
  add_epoch_options(c_loso, loso.epoch);
  c_loso->add_option("--seed", loso.seed, "master seed");

  AblateOpts ablate;
  auto* c_ablate = app.add_subcommand("ablate", "paired full-vs-ablated evaluation");
  c_ablate->add_option("--data", ablate.data, "dataset")->required();
  c_ablate->add_option("--preset", ablate.preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));
  c_ablate->add_option("--config", ablate.config_path, "model config overrides JSON");
  c_ablate->add_option("--out", ablate.out, "output directory");
  c_ablate->add_option("--mode", ablate.mode, "no-fc | no-occipital");
  c_ablate->add_option("--split", ablate.split, "holdout | kfold");
  c_ablate->add_option("--k", ablate.k, "fold count");
  c_ablate->add_option("--augment", ablate.augment_copies, "noisy copies per trial");
  add_epoch_options(c_ablate, ablate.epoch);
  c_ablate->add_option("--seed", ablate.seed, "master seed");

  PseudoOpts pseudo;
  auto* c_pseudo = app.add_subcommand("pseudo-online",
                                      "sliding-window replay evaluation");
  c_pseudo->add_option("--model", pseudo.model, "checkpoint path")->required();
  c_pseudo->add_option("--data", pseudo.data, "held-out dataset")->required();
  c_pseudo->add_option("--out", pseudo.out, "output directory");
  c_pseudo->add_option("--runs", pseudo.runs, "number of runs");
  c_pseudo->add_option("--trials-per-class", pseudo.trials_per_class,
                       "trials sampled per class per run");
  c_pseudo->add_option("--window", pseudo.window_s, "window length in seconds");
  c_pseudo->add_option("--overlap", pseudo.overlap, "window overlap fraction");
  c_pseudo->add_option("--threshold", pseudo.threshold,
                       "window-majority success threshold");
  c_pseudo->add_flag("--strict", pseudo.strict,
                     "window-majority requires strictly above the threshold");
  c_pseudo->add_option("--seed", pseudo.seed, "master seed");

  PsdOpts psd;
  auto* c_psd = app.add_subcommand("psd", "Welch power spectral density");
  c_psd->add_option("--in", psd.in, "input dataset")->required();
  c_psd->add_option("--out", psd.out, "output CSV");
  c_psd->add_option("--channel", psd.channel, "channel name (default: first)");
  c_psd->add_option("--f-lo", psd.f_lo, "low frequency bound");
  c_psd->add_option("--f-hi", psd.f_hi, "high frequency bound");
  c_psd->add_option("--segment", psd.segment_s, "segment length in seconds");
  c_psd->add_option("--overlap", psd.overlap, "segment overlap fraction");

  ErspOpts ersp;
  auto* c_ersp = app.add_subcommand("ersp", "event-related spectral perturbation");
  c_ersp->add_option("--in", ersp.in, "input dataset")->required();
  c_ersp->add_option("--out", ersp.out, "output CSV");
  c_ersp->add_option("--channel", ersp.channel, "channel name (default: first)");
  c_ersp->add_option("--f-lo", ersp.f_lo, "low frequency bound");
  c_ersp->add_option("--f-hi", ersp.f_hi, "high frequency bound");

  std::string grad_preset = "desk";
  auto* c_grad = app.add_subcommand("gradcheck",
                                    "finite-difference check of every layer type");
  c_grad->add_option("--preset", grad_preset, "paper | desk")
      ->check(CLI::IsMember({"paper", "desk"}));

  ExportOpts exp;
  auto* c_exp = app.add_subcommand("export-features", "per-trial activation export");
  c_exp->add_option("--model", exp.model, "checkpoint path")->required();
  c_exp->add_option("--data", exp.data, "dataset")->required();
  c_exp->add_option("--out", exp.out, "output CSV");
  c_exp->add_option("--stage", exp.stage,
                    "post-conv1 | post-conv2 | post-conv3 | pre-head");
  c_exp->add_option("--proj-dim", exp.proj_dim, "projection width for wide stages");
  c_exp->add_option("--seed", exp.seed, "projection seed");
  c_exp->add_flag("--topography", exp.topography,
                  "also write per-channel mean absolute conv output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_pre) return cmd_preprocess(pre);
    if (*c_plv) return cmd_plv(plv);
    if (*c_train) return cmd_train(train);
    if (*c_eval) return cmd_eval(eval);
    if (*c_cv) return cmd_cv(cv);
    if (*c_loso) return cmd_loso(loso);
    if (*c_ablate) return cmd_ablate(ablate);
    if (*c_pseudo) return cmd_pseudo_online(pseudo);
    if (*c_psd) return cmd_psd(psd);
    if (*c_ersp) return cmd_ersp(ersp);
    if (*c_grad) return cmd_gradcheck(grad_preset);
    if (*c_exp) return cmd_export_features(exp);
  } catch (const fcdn::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
