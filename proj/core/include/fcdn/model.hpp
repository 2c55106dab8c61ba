#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fcdn/bicubic.hpp"
#include "fcdn/connectivity.hpp"
#include "fcdn/dataset.hpp"
#include "fcdn/graph.hpp"

namespace fcdn {

// Geometry, transformer and training hyperparameters for one network. The
// paper preset reproduces the published layer table; the desk preset is the
// default and is sized so a full experiment runs on one core in minutes.
struct FcdnConfig {
  // signal geometry
  int n_channels = 64;
  int t_in = 1000;
  double fs = 250.0;
  // per-band temporal conv stack
  int conv_ch1 = 40, conv_ch2 = 80, conv_ch3 = 160;
  int k1 = 20, k2 = 20, k3 = 40;
  int pool = 32, pool_stride = 32;
  double dropout = 0.5;
  // image + transformer
  int image = 224, patch = 16, embed = 192, depth = 12, heads = 3;
  double mlp_ratio = 4.0;
  int n_classes = 4;
  bool share_conv_across_bands = false;
  // distillation + training
  double alpha = 1.0, beta = 0.5;
  double teacher_width = 2.0;
  double lr = 1e-4;
  int batch = 16;
  int epochs = 200;
  int teacher_epochs = 0;  // 0 -> same as epochs
  int patience = 20;
  bool early_stop = true;
  int fir_order = 30;
  int plv_edge_trim = kPlvEdgeTrim;

  // Shortest input the conv stack accepts (two valid convs then the pool).
  int min_input_len() const { return pool + k1 + k2 - 2; }
  int teacher_embed() const;
  void validate() const;
  std::string to_json() const;
  static FcdnConfig from_json(const std::string& text);
  std::uint64_t fingerprint() const;
};

FcdnConfig paper_config();
FcdnConfig desk_config();

// The three analysis bands in fixed order; index into per-band arrays.
inline constexpr int kNumBands = 3;
std::array<BandDefinition, kNumBands> model_bands();

// A dataset filtered into the three model bands (same trials and labels).
struct BandedDataset {
  std::array<EegDataset, kNumBands> bands;

  std::int64_t n_trials() const { return bands[0].n_trials(); }
  const std::vector<int>& labels() const { return bands[0].labels; }
};

BandedDataset band_split(const EegDataset& ds, int fir_order = 30);

// One FCDN network: three band-specific conv stacks whose maps are resized,
// normalized to 0-255, stacked as an RGB-like image, and classified by a
// token transformer. The same structure serves as the distillation teacher
// (one special token, wider embedding).
struct FcdnModel {
  FcdnConfig cfg;
  bool is_teacher = false;
  int n_special = 2;
  int embed_dim = 0;
  std::vector<std::string> channel_names;
  std::vector<std::string> class_names;
  std::array<ChannelWeights, kNumBands> weights;
  std::array<nn::Graph<float>, kNumBands> conv;
  nn::Graph<float> trunk;
  std::unique_ptr<BicubicResize> resize;
  bool fitted = false;

  std::uint64_t seed = 0;
  int trained_epochs = 0;
  std::uint64_t train_fingerprint = 0;
  std::string preprocess_hash;

  std::unique_ptr<FcdnModel> teacher;
};

FcdnModel build_model(const FcdnConfig& cfg, bool teacher = false);
void init_model(FcdnModel& m, std::uint64_t seed);

// Installs all-ones channel weights and marks the model fitted. Also the
// "no-fc" ablation: weighting becomes the identity.
void set_uniform_weights(FcdnModel& m);

// Name -> tensor view over everything a checkpoint must carry: parameters
// plus batch-norm running statistics, prefixed by band or trunk.
struct NamedTensor {
  std::string name;
  nn::Tensor<float>* tensor;
};
std::vector<NamedTensor> model_tensors(FcdnModel& m);

// Conv stack over one band: [B,1,K,T] -> [B,conv_ch3,K,1].
nn::Tensor<float>& conv_block_forward(nn::Graph<float>& block,
                                      const nn::Tensor<float>& band_signal,
                                      nn::Mode mode);

// Cubic resize of a single [H,W] map to [h_out,w_out].
nn::Tensor<float> bicubic_resize(const nn::Tensor<float>& map, int h_out, int w_out);

// Min-max scales each [S,S] map to 0-255 independently (a constant map
// becomes all zeros and raises the flag), then stacks the three bands as
// image planes: [3,S,S].
nn::Tensor<float> normalize_and_stack(const std::array<nn::Tensor<float>, kNumBands>& maps,
                                      bool* degenerate = nullptr);

// Per-batch context kept between fcdn_forward and fcdn_backward.
struct ForwardCache {
  std::array<nn::Tensor<float>, kNumBands> conv_out;  // [B,C3,K,1]
  std::array<std::vector<float>, kNumBands> scale;    // 255/(max-min) per sample
  bool any_degenerate = false;
  nn::Tensor<float> image;        // [B,3,S,S]
  nn::Tensor<float> head_logits;  // [B,n_heads,n_classes]
};

// Full forward pass: weight channels per band, run the conv stacks, resize,
// normalize/stack, then the transformer trunk. Returns [B,n_classes]: the
// class head in train mode, the average of class and distillation heads in
// eval mode.
nn::Tensor<float> fcdn_forward(FcdnModel& m,
                               const std::array<nn::Tensor<float>, kNumBands>& bands,
                               nn::Mode mode, ForwardCache* cache = nullptr);

// Backward through everything fcdn_forward touched. `d_head_logits` is the
// gradient w.r.t. the [B,n_heads,n_classes] head output; `trunk_extra`
// injects additional gradients at trunk layer outputs (distillation terms).
void fcdn_backward(FcdnModel& m, const ForwardCache& cache,
                   const nn::Tensor<float>& d_head_logits,
                   std::span<const std::pair<std::size_t, const nn::Tensor<float>*>>
                       trunk_extra = {});

// Distillation objective: alpha * cross-entropy of the class logits plus
// beta * sum_i (1 - cos_sim(t_feats[i], s_feats[i])) * q[i], with q the
// layer weights normalized to sum 1 and treated as constants. Gradients are
// written for the logits and the student features when requested.
template <class T>
struct DistillOutput {
  double l_cls = 0.0;
  std::vector<double> sim;  // per-layer 1 - mean cosine similarity
  std::vector<double> q;    // normalized layer weights, sum 1
  double l_distill = 0.0;
};

template <class T>
DistillOutput<T> distillation_loss(const nn::Tensor<T>& cls_logits,
                                   std::span<const int> labels,
                                   const std::vector<nn::Tensor<T>>& t_feats,
                                   const std::vector<nn::Tensor<T>>& s_feats,
                                   const std::vector<double>& q_raw, double alpha,
                                   double beta, nn::Tensor<T>* d_logits = nullptr,
                                   std::vector<nn::Tensor<T>>* d_s_feats = nullptr);

// Gathers trials into per-band batch tensors [B,1,K,T].
std::array<nn::Tensor<float>, kNumBands> gather_bands(const BandedDataset& bd,
                                                      std::span<const std::int64_t> idx);
std::vector<int> gather_labels(const BandedDataset& bd,
                               std::span<const std::int64_t> idx);

// Softmax class probabilities for every trial, evaluated in batches.
std::vector<std::vector<double>> predict_proba(FcdnModel& m, const BandedDataset& bd,
                                               int batch = 32);
double accuracy_of(const std::vector<std::vector<double>>& proba,
                   std::span<const int> labels);

struct EpochRecord {
  int epoch = 0;
  bool is_teacher = false;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

struct FitResult {
  FcdnModel model;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val_acc = 0.0;
  std::int64_t skipped_steps = 0;
};

// Trains the full pipeline: per-band channel weights from the training split,
// then the teacher (plain cross-entropy), then the student against the
// distillation objective with Adam, early-stopped on validation accuracy.
// Both datasets must already be at the model's sampling rate and length.
// uniform_weights skips the connectivity weighting and trains on all-ones
// channel weights instead (the "no-fc" ablation).
FitResult fit_fcdn(const EegDataset& train, const EegDataset& val,
                   const FcdnConfig& cfg, std::uint64_t seed,
                   bool uniform_weights = false);

}  // namespace fcdn
