#include "fcdn/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "fcdn/error.hpp"
#include "fcdn/hashing.hpp"
#include "fcdn/optim.hpp"
#include "json.hpp"

namespace fcdn {

using nn::Mode;
using nn::Tensor;

int FcdnConfig::teacher_embed() const {
  return static_cast<int>(std::lround(embed * teacher_width));
}

void FcdnConfig::validate() const {
  require(n_channels >= 2, "config: need at least 2 channels");
  require(fs > 0, "config: sampling rate must be positive");
  require(k1 >= 1 && k2 >= 1 && k3 >= 1 && pool >= 1 && pool_stride >= 1,
          "config: conv/pool geometry must be positive");
  require(t_in >= min_input_len(),
          "config: input length " + std::to_string(t_in) +
              " is shorter than the conv receptive length " +
              std::to_string(min_input_len()));
  require(conv_ch1 < conv_ch2 && conv_ch2 < conv_ch3,
          "config: conv channel progression must be strictly increasing");
  require(conv_ch1 >= 1, "config: conv channels must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "config: dropout must be in [0,1)");
  require(image % patch == 0, "config: image size must divide by patch size");
  require(n_classes >= 2, "config: need at least 2 classes");
  require(embed % heads == 0, "config: embed dim must divide by heads");
  require(teacher_embed() % (2 * heads) == 0,
          "config: teacher embed dim must divide by its head count");
  require(mlp_ratio > 0, "config: mlp ratio must be positive");
  require(alpha >= 0 && beta >= 0, "config: loss weights must be non-negative");
  require(lr > 0, "config: learning rate must be positive");
  require(batch >= 2, "config: batch size must be at least 2");
  require(epochs >= 1 && teacher_epochs >= 0, "config: bad epoch counts");
  require(patience >= 1, "config: patience must be at least 1");
  require(fir_order >= 2 && fir_order % 2 == 0, "config: FIR order must be even");
  require(plv_edge_trim >= 0, "config: edge trim must be non-negative");
}

std::string FcdnConfig::to_json() const {
  nlohmann::json j;
  j["n_channels"] = n_channels;
  j["t_in"] = t_in;
  j["fs"] = fs;
  j["conv_ch1"] = conv_ch1;
  j["conv_ch2"] = conv_ch2;
  j["conv_ch3"] = conv_ch3;
  j["k1"] = k1;
  j["k2"] = k2;
  j["k3"] = k3;
  j["pool"] = pool;
  j["pool_stride"] = pool_stride;
  j["dropout"] = dropout;
  j["image"] = image;
  j["patch"] = patch;
  j["embed"] = embed;
  j["depth"] = depth;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["n_classes"] = n_classes;
  j["share_conv_across_bands"] = share_conv_across_bands;
  j["alpha"] = alpha;
  j["beta"] = beta;
  j["teacher_width"] = teacher_width;
  j["lr"] = lr;
  j["batch"] = batch;
  j["epochs"] = epochs;
  j["teacher_epochs"] = teacher_epochs;
  j["patience"] = patience;
  j["early_stop"] = early_stop;
  j["fir_order"] = fir_order;
  j["plv_edge_trim"] = plv_edge_trim;
  return j.dump();
}

FcdnConfig FcdnConfig::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  require(j.is_object(), "config: JSON root must be an object");
  FcdnConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "n_channels") c.n_channels = value.get<int>();
      else if (key == "t_in") c.t_in = value.get<int>();
      else if (key == "fs") c.fs = value.get<double>();
      else if (key == "conv_ch1") c.conv_ch1 = value.get<int>();
      else if (key == "conv_ch2") c.conv_ch2 = value.get<int>();
      else if (key == "conv_ch3") c.conv_ch3 = value.get<int>();
      else if (key == "k1") c.k1 = value.get<int>();
      else if (key == "k2") c.k2 = value.get<int>();
      else if (key == "k3") c.k3 = value.get<int>();
      else if (key == "pool") c.pool = value.get<int>();
      else if (key == "pool_stride") c.pool_stride = value.get<int>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "image") c.image = value.get<int>();
      else if (key == "patch") c.patch = value.get<int>();
      else if (key == "embed") c.embed = value.get<int>();
      else if (key == "depth") c.depth = value.get<int>();
      else if (key == "heads") c.heads = value.get<int>();
      else if (key == "mlp_ratio") c.mlp_ratio = value.get<double>();
      else if (key == "n_classes") c.n_classes = value.get<int>();
      else if (key == "share_conv_across_bands") c.share_conv_across_bands = value.get<bool>();
      else if (key == "alpha") c.alpha = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "teacher_width") c.teacher_width = value.get<double>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "batch") c.batch = value.get<int>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "teacher_epochs") c.teacher_epochs = value.get<int>();
      else if (key == "patience") c.patience = value.get<int>();
      else if (key == "early_stop") c.early_stop = value.get<bool>();
      else if (key == "fir_order") c.fir_order = value.get<int>();
      else if (key == "plv_edge_trim") c.plv_edge_trim = value.get<int>();
      else throw ValidationError("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception&) {
      throw ValidationError("config: bad value type for key '" + key + "'");
    }
  }
  return c;
}

std::uint64_t FcdnConfig::fingerprint() const { return hash_string(to_json()); }

FcdnConfig paper_config() { return {}; }

FcdnConfig desk_config() {
  FcdnConfig c;
  c.n_channels = 16;
  c.t_in = 250;
  c.fs = 125.0;
  c.conv_ch1 = 4;
  c.conv_ch2 = 8;
  c.conv_ch3 = 16;
  c.k1 = 9;
  c.k2 = 9;
  c.k3 = 9;
  c.pool = 8;
  c.pool_stride = 8;
  c.image = 32;
  c.patch = 8;
  c.embed = 64;
  c.depth = 4;
  c.heads = 4;
  c.epochs = 40;
  c.teacher_epochs = 25;
  c.patience = 8;
  return c;
}

std::array<BandDefinition, kNumBands> model_bands() {
  return BandDefinition::standard_bands();
}

BandedDataset band_split(const EegDataset& ds, int fir_order) {
  const auto bands = model_bands();
  BandedDataset out;
  for (int b = 0; b < kNumBands; ++b) out.bands[b] = bandpass_filter(ds, bands[b], fir_order);
  return out;
}

namespace {

// Enumerates a graph's parameter values plus batch-norm running statistics
// under a stable prefix; the order defines the checkpoint manifest order.
void append_graph_tensors(nn::Graph<float>& g, const std::string& prefix,
                          std::vector<NamedTensor>& out) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    nn::Layer<float>& l = g.layer(i);
    for (auto* p : l.params()) out.push_back({prefix + p->name, &p->value});
    if (auto* bn = dynamic_cast<nn::BatchNorm<float>*>(&l)) {
      out.push_back({prefix + l.name() + ".running_mean", &bn->running_mean()});
      out.push_back({prefix + l.name() + ".running_var", &bn->running_var()});
    }
  }
}

const std::array<std::string, kNumBands> kBandPrefix = {"delta.", "theta.", "alpha."};

void sync_shared_conv_values(FcdnModel& m) {
  std::vector<NamedTensor> src, dst;
  append_graph_tensors(m.conv[0], "", src);
  for (int b = 1; b < kNumBands; ++b) {
    dst.clear();
    append_graph_tensors(m.conv[b], "", dst);
    for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = *src[i].tensor;
  }
}

void accumulate_shared_conv_grads(FcdnModel& m) {
  auto dst = m.conv[0].parameters();
  for (int b = 1; b < kNumBands; ++b) {
    auto src = m.conv[b].parameters();
    for (std::size_t i = 0; i < dst.size(); ++i)
      for (std::int64_t j = 0; j < dst[i]->grad.numel(); ++j)
        dst[i]->grad.data[j] += src[i]->grad.data[j];
  }
}

}  // namespace

FcdnModel build_model(const FcdnConfig& cfg, bool teacher) {
  cfg.validate();
  FcdnModel m;
  m.cfg = cfg;
  m.is_teacher = teacher;
  m.n_special = teacher ? 1 : 2;
  m.embed_dim = teacher ? cfg.teacher_embed() : cfg.embed;
  const int heads = teacher ? cfg.heads * 2 : cfg.heads;

  for (int b = 0; b < kNumBands; ++b) {
    auto& g = m.conv[b];
    g.emplace<nn::Conv2d<float>>("conv1", 1, cfg.conv_ch1, 1, cfg.k1);
    g.emplace<nn::BatchNorm<float>>("bn1", cfg.conv_ch1);
    g.emplace<nn::Conv2d<float>>("conv2", cfg.conv_ch1, cfg.conv_ch2, 1, cfg.k2);
    g.emplace<nn::BatchNorm<float>>("bn2", cfg.conv_ch2);
    g.emplace<nn::Elu<float>>("elu2");
    g.emplace<nn::Conv2d<float>>("conv3", cfg.conv_ch2, cfg.conv_ch3, 1, cfg.k3, 1, 1,
                                 nn::Padding::same);
    g.emplace<nn::BatchNorm<float>>("bn3", cfg.conv_ch3);
    g.emplace<nn::Elu<float>>("elu3");
    g.emplace<nn::AvgPool<float>>("pool", 1, cfg.pool, 1, cfg.pool_stride);
    g.emplace<nn::Dropout<float>>("drop1", cfg.dropout);
    g.emplace<nn::Elu<float>>("elu4");
    g.emplace<nn::AdaptiveAvgPoolTime<float>>("adapt", 1);
    g.emplace<nn::Dropout<float>>("drop2", cfg.dropout);
  }

  m.trunk.emplace<nn::PatchEmbed<float>>("patch_embed", 3, cfg.image, cfg.patch,
                                         m.embed_dim, m.n_special, 1.0 / 255.0);
  for (int i = 0; i < cfg.depth; ++i)
    m.trunk.emplace<nn::TransformerBlock<float>>("block" + std::to_string(i),
                                                 m.embed_dim, heads, cfg.mlp_ratio);
  m.trunk.emplace<nn::LayerNorm<float>>("ln_f", m.embed_dim);
  m.trunk.emplace<nn::TokenHeads<float>>("heads", m.embed_dim, cfg.n_classes,
                                         m.n_special);

  m.resize = std::make_unique<BicubicResize>(cfg.conv_ch3, cfg.n_channels, cfg.image,
                                             cfg.image);
  const auto bands = model_bands();
  for (int b = 0; b < kNumBands; ++b) {
    m.weights[b].band = bands[b];
    m.weights[b].w.assign(static_cast<std::size_t>(cfg.n_channels), 1.0);
  }
  return m;
}

void init_model(FcdnModel& m, std::uint64_t seed) {
  m.seed = seed;
  for (int b = 0; b < kNumBands; ++b)
    m.conv[b].init_params(derive_seed(seed, {0xC0, static_cast<std::uint64_t>(b)}));
  m.trunk.init_params(derive_seed(seed, {0x7A}));
  if (auto* heads = dynamic_cast<nn::TokenHeads<float>*>(m.trunk.find("heads")))
    heads->zero_init();
  if (m.cfg.share_conv_across_bands) sync_shared_conv_values(m);
}

void set_uniform_weights(FcdnModel& m) {
  const auto bands = model_bands();
  for (int b = 0; b < kNumBands; ++b) {
    m.weights[b].band = bands[b];
    m.weights[b].w.assign(static_cast<std::size_t>(m.cfg.n_channels), 1.0);
    m.weights[b].degenerate = false;
    m.weights[b].source_fingerprint = 0;
  }
  m.fitted = true;
}

std::vector<NamedTensor> model_tensors(FcdnModel& m) {
  std::vector<NamedTensor> out;
  for (int b = 0; b < kNumBands; ++b) append_graph_tensors(m.conv[b], kBandPrefix[b], out);
  append_graph_tensors(m.trunk, "trunk.", out);
  return out;
}

nn::Tensor<float>& conv_block_forward(nn::Graph<float>& block,
                                      const nn::Tensor<float>& band_signal,
                                      nn::Mode mode) {
  require(band_signal.rank() == 4 && band_signal.dim(1) == 1,
          "conv block: input must be [B,1,channels,time]");
  return const_cast<Tensor<float>&>(block.forward(band_signal, mode));
}

nn::Tensor<float> bicubic_resize(const nn::Tensor<float>& map, int h_out, int w_out) {
  require(map.rank() == 2, "bicubic: map must be 2-D");
  BicubicResize plan(static_cast<int>(map.dim(0)), static_cast<int>(map.dim(1)), h_out,
                     w_out);
  Tensor<float> out({h_out, w_out});
  plan.apply(map.data.data(), out.data.data());
  return out;
}

nn::Tensor<float> normalize_and_stack(const std::array<nn::Tensor<float>, kNumBands>& maps,
                                      bool* degenerate) {
  const std::int64_t S = maps[0].dim(0);
  if (degenerate != nullptr) *degenerate = false;
  for (const auto& m : maps)
    require(m.rank() == 2 && m.dim(0) == maps[0].dim(0) && m.dim(1) == maps[0].dim(1),
            "normalize_and_stack: maps must share one shape");
  Tensor<float> out({kNumBands, S, maps[0].dim(1)});
  for (int b = 0; b < kNumBands; ++b) {
    const auto [lo, hi] = std::minmax_element(maps[b].data.begin(), maps[b].data.end());
    float* dst = &out.data[b * maps[b].numel()];
    if (*hi <= *lo) {
      if (degenerate != nullptr) *degenerate = true;
      std::fill_n(dst, maps[b].numel(), 0.0f);
      continue;
    }
    const float scale = 255.0f / (*hi - *lo);
    for (std::int64_t i = 0; i < maps[b].numel(); ++i)
      dst[i] = (maps[b].data[i] - *lo) * scale;
  }
  return out;
}

nn::Tensor<float> fcdn_forward(FcdnModel& m,
                               const std::array<nn::Tensor<float>, kNumBands>& bands,
                               nn::Mode mode, ForwardCache* cache) {
  require(m.fitted, "model: channel weights not fitted");
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;

  const FcdnConfig& cfg = m.cfg;
  const std::int64_t B = bands[0].dim(0);
  for (int b = 0; b < kNumBands; ++b) {
    require(bands[b].rank() == 4 && bands[b].dim(0) == B && bands[b].dim(1) == 1 &&
                bands[b].dim(2) == cfg.n_channels,
            "model: band tensors must be [B,1," + std::to_string(cfg.n_channels) + ",T]");
    require(bands[b].dim(3) >= cfg.min_input_len(),
            "model: input shorter than the conv receptive length (" +
                std::to_string(cfg.min_input_len()) + " samples)");
  }

  const std::int64_t K = cfg.n_channels;
  const std::int64_t T = bands[0].dim(3);
  c.any_degenerate = false;
  for (int b = 0; b < kNumBands; ++b) {
    Tensor<float> wx = bands[b];
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t k = 0; k < K; ++k) {
        const auto wgt = static_cast<float>(m.weights[b].w[static_cast<std::size_t>(k)]);
        float* row = &wx.data[(bi * K + k) * T];
        for (std::int64_t t = 0; t < T; ++t) row[t] *= wgt;
      }
    c.conv_out[b] = conv_block_forward(m.conv[b], wx, mode);
  }

  const int S = cfg.image;
  const std::int64_t C3 = cfg.conv_ch3;
  c.image = Tensor<float>({B, kNumBands, S, S});
  std::vector<float> resized(static_cast<std::size_t>(S) * S);
  for (int b = 0; b < kNumBands; ++b) {
    c.scale[b].assign(static_cast<std::size_t>(B), 0.0f);
    for (std::int64_t bi = 0; bi < B; ++bi) {
      m.resize->apply(&c.conv_out[b].data[bi * C3 * K], resized.data());
      const auto [lo, hi] = std::minmax_element(resized.begin(), resized.end());
      float* plane = &c.image.data[(bi * kNumBands + b) * S * S];
      if (*hi <= *lo) {
        c.any_degenerate = true;
        std::fill_n(plane, static_cast<std::int64_t>(S) * S, 0.0f);
        continue;
      }
      // The min/max are treated as constants in the backward pass.
      const float scale = 255.0f / (*hi - *lo);
      c.scale[b][static_cast<std::size_t>(bi)] = scale;
      for (std::size_t i = 0; i < resized.size(); ++i)
        plane[i] = (resized[i] - *lo) * scale;
    }
  }

  c.head_logits = m.trunk.forward(c.image, mode);
  const std::int64_t C = cfg.n_classes;
  Tensor<float> logits({B, C});
  if (mode == Mode::eval && m.n_special > 1) {
    for (std::int64_t bi = 0; bi < B; ++bi)
      for (std::int64_t cc = 0; cc < C; ++cc) {
        double acc = 0.0;
        for (int h = 0; h < m.n_special; ++h)
          acc += c.head_logits.data[(bi * m.n_special + h) * C + cc];
        logits.data[bi * C + cc] = static_cast<float>(acc / m.n_special);
      }
  } else {
    for (std::int64_t bi = 0; bi < B; ++bi)
      std::copy_n(&c.head_logits.data[bi * m.n_special * C], C, &logits.data[bi * C]);
  }
  return logits;
}

void fcdn_backward(FcdnModel& m, const ForwardCache& cache,
                   const nn::Tensor<float>& d_head_logits,
                   std::span<const std::pair<std::size_t, const nn::Tensor<float>*>>
                       trunk_extra) {
  m.trunk.backward(d_head_logits, trunk_extra);
  const Tensor<float>& d_img = m.trunk.input_grad();
  const FcdnConfig& cfg = m.cfg;
  const std::int64_t B = d_img.dim(0);
  const int S = cfg.image;
  const std::int64_t C3 = cfg.conv_ch3, K = cfg.n_channels;
  std::vector<float> d_plane(static_cast<std::size_t>(S) * S);
  for (int b = 0; b < kNumBands; ++b) {
    Tensor<float> d_conv({B, C3, K, 1});
    for (std::int64_t bi = 0; bi < B; ++bi) {
      const float scale = cache.scale[b][static_cast<std::size_t>(bi)];
      const float* src = &d_img.data[(bi * kNumBands + b) * S * S];
      for (std::size_t i = 0; i < d_plane.size(); ++i) d_plane[i] = src[i] * scale;
      m.resize->apply_transpose(d_plane.data(), &d_conv.data[bi * C3 * K]);
    }
    m.conv[b].backward(d_conv);
  }
}

template <class T>
DistillOutput<T> distillation_loss(const nn::Tensor<T>& cls_logits,
                                   std::span<const int> labels,
                                   const std::vector<nn::Tensor<T>>& t_feats,
                                   const std::vector<nn::Tensor<T>>& s_feats,
                                   const std::vector<double>& q_raw, double alpha,
                                   double beta, nn::Tensor<T>* d_logits,
                                   std::vector<nn::Tensor<T>>* d_s_feats) {
  require(!t_feats.empty(), "distillation: teacher features absent");
  require(t_feats.size() == s_feats.size(),
          "distillation: teacher/student layer count mismatch");
  require(q_raw.size() == t_feats.size(), "distillation: one q per layer required");

  const std::size_t N = t_feats.size();
  DistillOutput<T> out;
  out.q.resize(N);
  out.sim.resize(N);
  double q_sum = 0.0;
  for (const double q : q_raw) {
    require(q >= 0.0, "distillation: layer weights must be non-negative");
    q_sum += q;
  }
  require(q_sum > 0.0, "distillation: layer weights sum to zero");
  for (std::size_t i = 0; i < N; ++i) out.q[i] = q_raw[i] / q_sum;

  out.l_cls = nn::softmax_cross_entropy(cls_logits, labels, d_logits);
  if (d_logits != nullptr)
    for (auto& v : d_logits->data) v = static_cast<T>(v * alpha);

  if (d_s_feats != nullptr) {
    d_s_feats->clear();
    for (const auto& s : s_feats) d_s_feats->emplace_back(s.shape);
  }

  const std::int64_t B = cls_logits.dim(0);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& tf = t_feats[i];
    const auto& sf = s_feats[i];
    require(tf.rank() == 2 && sf.rank() == 2 && tf.shape == sf.shape &&
                tf.dim(0) == B,
            "distillation: features must be [batch, dim] on both sides");
    const std::int64_t D = tf.dim(1);
    double sim_acc = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const T* t = &tf.data[b * D];
      const T* s = &sf.data[b * D];
      double tt = 0.0, ss = 0.0, ts = 0.0;
      for (std::int64_t d = 0; d < D; ++d) {
        tt += static_cast<double>(t[d]) * t[d];
        ss += static_cast<double>(s[d]) * s[d];
        ts += static_cast<double>(t[d]) * s[d];
      }
      const double nt = std::sqrt(tt) + 1e-12, ns = std::sqrt(ss) + 1e-12;
      const double cos = ts / (nt * ns);
      sim_acc += 1.0 - cos;
      if (d_s_feats != nullptr) {
        T* g = &(*d_s_feats)[i].data[b * D];
        const double w = beta * out.q[i] / static_cast<double>(B);
        for (std::int64_t d = 0; d < D; ++d)
          g[d] = static_cast<T>(w * (cos * s[d] / (ns * ns) - t[d] / (nt * ns)));
      }
    }
    out.sim[i] = sim_acc / static_cast<double>(B);
  }

  double sim_term = 0.0;
  for (std::size_t i = 0; i < N; ++i) sim_term += out.sim[i] * out.q[i];
  out.l_distill = alpha * out.l_cls + beta * sim_term;
  require(std::isfinite(out.l_distill), "distillation: non-finite loss");
  return out;
}

template DistillOutput<float> distillation_loss<float>(
    const nn::Tensor<float>&, std::span<const int>, const std::vector<nn::Tensor<float>>&,
    const std::vector<nn::Tensor<float>>&, const std::vector<double>&, double, double,
    nn::Tensor<float>*, std::vector<nn::Tensor<float>>*);
template DistillOutput<double> distillation_loss<double>(
    const nn::Tensor<double>&, std::span<const int>,
    const std::vector<nn::Tensor<double>>&, const std::vector<nn::Tensor<double>>&,
    const std::vector<double>&, double, double, nn::Tensor<double>*,
    std::vector<nn::Tensor<double>>*);

std::array<nn::Tensor<float>, kNumBands> gather_bands(const BandedDataset& bd,
                                                      std::span<const std::int64_t> idx) {
  std::array<Tensor<float>, kNumBands> out;
  const std::int64_t B = static_cast<std::int64_t>(idx.size());
  for (int b = 0; b < kNumBands; ++b) {
    const EegDataset& ds = bd.bands[b];
    const std::int64_t K = ds.n_channels(), T = ds.samples_per_trial;
    out[b] = Tensor<float>({B, 1, K, T});
    for (std::int64_t i = 0; i < B; ++i)
      for (std::int64_t k = 0; k < K; ++k) {
        const auto src = ds.trial_channel(idx[static_cast<std::size_t>(i)], k);
        std::copy(src.begin(), src.end(), &out[b].data[(i * K + k) * T]);
      }
  }
  return out;
}

std::vector<int> gather_labels(const BandedDataset& bd,
                               std::span<const std::int64_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (const auto i : idx) out.push_back(bd.labels()[static_cast<std::size_t>(i)]);
  return out;
}

std::vector<std::vector<double>> predict_proba(FcdnModel& m, const BandedDataset& bd,
                                               int batch) {
  require(batch >= 1, "predict: batch must be positive");
  const std::int64_t n = bd.n_trials();
  std::vector<std::vector<double>> proba(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx;
  for (std::int64_t start = 0; start < n; start += batch) {
    const std::int64_t end = std::min(n, start + batch);
    idx.clear();
    for (std::int64_t i = start; i < end; ++i) idx.push_back(i);
    const auto bands = gather_bands(bd, idx);
    const Tensor<float> logits = fcdn_forward(m, bands, Mode::eval);
    const std::int64_t C = logits.dim(1);
    for (std::int64_t i = start; i < end; ++i) {
      const float* row = &logits.data[(i - start) * C];
      double mx = -1e300;
      for (std::int64_t c = 0; c < C; ++c) mx = std::max(mx, static_cast<double>(row[c]));
      double z = 0.0;
      std::vector<double> p(static_cast<std::size_t>(C));
      for (std::int64_t c = 0; c < C; ++c) {
        p[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(row[c]) - mx);
        z += p[static_cast<std::size_t>(c)];
      }
      for (auto& v : p) v /= z;
      proba[static_cast<std::size_t>(i)] = std::move(p);
    }
  }
  return proba;
}

double accuracy_of(const std::vector<std::vector<double>>& proba,
                   std::span<const int> labels) {
  require(proba.size() == labels.size(), "accuracy: size mismatch");
  require(!proba.empty(), "accuracy: empty prediction set");
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < proba.size(); ++i) {
    int arg = 0;
    for (std::size_t c = 1; c < proba[i].size(); ++c)
      if (proba[i][c] > proba[i][arg]) arg = static_cast<int>(c);
    if (arg == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(proba.size());
}

namespace {

struct PhaseOutcome {
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  double best_val = 0.0;
  std::int64_t skipped = 0;
};

Tensor<float> cls_rows(const Tensor<float>& hidden) {
  const std::int64_t B = hidden.dim(0), Tn = hidden.dim(1), D = hidden.dim(2);
  Tensor<float> out({B, D});
  for (std::int64_t b = 0; b < B; ++b)
    std::copy_n(&hidden.data[b * Tn * D], D, &out.data[b * D]);
  return out;
}

Tensor<float> project_rows(const Tensor<float>& x, const Tensor<float>& p) {
  const std::int64_t B = x.dim(0), In = x.dim(1), Out = p.dim(1);
  Tensor<float> y({B, Out});
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t i = 0; i < In; ++i) {
      const float v = x.data[b * In + i];
      const float* prow = &p.data[i * Out];
      float* yrow = &y.data[b * Out];
      for (std::int64_t o = 0; o < Out; ++o) yrow[o] += v * prow[o];
    }
  return y;
}

// Mean attention weight landing on the special tokens at one layer.
double special_token_mass(const Tensor<float>& attn, int n_special) {
  const std::int64_t B = attn.dim(0), H = attn.dim(1), Tn = attn.dim(2);
  double acc = 0.0;
  for (std::int64_t b = 0; b < B; ++b)
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t q = 0; q < Tn; ++q) {
        const float* row = &attn.data[(((b * H) + h) * Tn + q) * Tn];
        for (int s = 0; s < n_special; ++s) acc += row[s];
      }
  return acc / static_cast<double>(B * H * Tn);
}

std::vector<Tensor<float>> snapshot_values(FcdnModel& m) {
  std::vector<Tensor<float>> snap;
  for (const auto& nt : model_tensors(m)) snap.push_back(*nt.tensor);
  return snap;
}

void restore_values(FcdnModel& m, const std::vector<Tensor<float>>& snap) {
  auto tensors = model_tensors(m);
  require(tensors.size() == snap.size(), "model: snapshot size mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i].tensor = snap[i];
}

PhaseOutcome train_phase(FcdnModel& net, FcdnModel* teacher,
                         const std::vector<Tensor<float>>& proj,
                         const BandedDataset& btr, const BandedDataset& bva,
                         const FcdnConfig& cfg, std::uint64_t seed, bool is_teacher) {
  std::vector<nn::Parameter<float>*> params;
  const int nconv = cfg.share_conv_across_bands ? 1 : kNumBands;
  for (int b = 0; b < nconv; ++b)
    for (auto* p : net.conv[b].parameters()) params.push_back(p);
  for (auto* p : net.trunk.parameters()) params.push_back(p);
  nn::Adam<float> opt(params, nn::AdamConfig{.lr = cfg.lr});

  const int max_epochs =
      is_teacher ? (cfg.teacher_epochs > 0 ? cfg.teacher_epochs : cfg.epochs)
                 : cfg.epochs;
  const std::int64_t n = btr.n_trials();
  const std::int64_t C = cfg.n_classes;

  PhaseOutcome out;
  out.best_val = -1.0;
  std::vector<Tensor<float>> best_snap;
  int since_best = 0;

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

  // The teacher runs in eval mode with frozen weights, so its projected
  // per-trial features never change across epochs; compute them once and
  // gather rows per batch instead of re-running the teacher forward.
  std::vector<Tensor<float>> teacher_feats;  // depth x [n, student_embed]
  if (!is_teacher) {
    const std::int64_t D = net.embed_dim;
    teacher_feats.assign(static_cast<std::size_t>(cfg.depth), Tensor<float>({n, D}));
    for (std::int64_t start = 0; start < n; start += cfg.batch) {
      const std::int64_t end = std::min(n, start + cfg.batch);
      const std::span<const std::int64_t> idx(order.data() + start,
                                              static_cast<std::size_t>(end - start));
      ForwardCache tcache;
      fcdn_forward(*teacher, gather_bands(btr, idx), Mode::eval, &tcache);
      for (int i = 0; i < cfg.depth; ++i) {
        const auto rows = project_rows(
            cls_rows(teacher->trunk.activation("block" + std::to_string(i))),
            proj[static_cast<std::size_t>(i)]);
        for (std::int64_t r = 0; r < end - start; ++r)
          std::copy_n(&rows.data[r * D], D,
                      &teacher_feats[static_cast<std::size_t>(i)]
                           .data[(start + r) * D]);
      }
    }
  }

  for (int epoch = 1; epoch <= max_epochs; ++epoch) {
    Rng rng(derive_seed(seed, {0xE0, is_teacher ? 1ull : 0ull,
                               static_cast<std::uint64_t>(epoch)}));
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::int64_t batches = 0, correct = 0, seen = 0;
    for (std::int64_t start = 0; start + 2 <= n; start += cfg.batch) {
      const std::int64_t end = std::min(n, start + cfg.batch);
      if (end - start < 2) break;  // batch norm needs more than one sample
      const std::span<const std::int64_t> idx(order.data() + start,
                                              static_cast<std::size_t>(end - start));
      const auto bands = gather_bands(btr, idx);
      const auto labels = gather_labels(btr, idx);
      const std::int64_t B = end - start;

      ForwardCache cache;
      const Tensor<float> logits = fcdn_forward(net, bands, Mode::train, &cache);
      for (std::int64_t i = 0; i < B; ++i) {
        int arg = 0;
        for (std::int64_t c = 1; c < C; ++c)
          if (logits.data[i * C + c] > logits.data[i * C + arg])
            arg = static_cast<int>(c);
        correct += arg == labels[static_cast<std::size_t>(i)] ? 1 : 0;
      }
      seen += B;

      Tensor<float> d_logits;
      double loss = 0.0;
      std::vector<Tensor<float>> extra_store;
      std::vector<std::pair<std::size_t, const Tensor<float>*>> extra;
      if (is_teacher) {
        loss = nn::softmax_cross_entropy(logits, labels, &d_logits);
      } else {
        std::vector<Tensor<float>> t_feats, s_feats;
        std::vector<double> q_raw;
        const std::int64_t D = net.embed_dim;
        for (int i = 0; i < cfg.depth; ++i) {
          const std::string block = "block" + std::to_string(i);
          Tensor<float> tf({B, D});
          for (std::int64_t r = 0; r < B; ++r)
            std::copy_n(&teacher_feats[static_cast<std::size_t>(i)]
                             .data[idx[static_cast<std::size_t>(r)] * D],
                        D, &tf.data[r * D]);
          t_feats.push_back(std::move(tf));
          s_feats.push_back(cls_rows(net.trunk.activation(block)));
          auto* tb = dynamic_cast<nn::TransformerBlock<float>*>(
              net.trunk.find(block));
          q_raw.push_back(
              special_token_mass(tb->attention().last_attention(), net.n_special));
        }
        std::vector<Tensor<float>> d_s;
        const auto dl = distillation_loss<float>(logits, labels, t_feats, s_feats,
                                                 q_raw, cfg.alpha, cfg.beta, &d_logits,
                                                 &d_s);
        loss = dl.l_distill;
        extra_store.reserve(static_cast<std::size_t>(cfg.depth));
        const std::int64_t Tn = net.trunk.activation("block0").dim(1);
        for (int i = 0; i < cfg.depth; ++i) {
          Tensor<float> g({B, Tn, D});
          for (std::int64_t b = 0; b < B; ++b)
            std::copy_n(&d_s[static_cast<std::size_t>(i)].data[b * D], D,
                        &g.data[b * Tn * D]);
          extra_store.push_back(std::move(g));
          extra.emplace_back(static_cast<std::size_t>(1 + i),
                             &extra_store.back());
        }
      }
      if (!std::isfinite(loss))
        throw Error("training diverged: non-finite loss at epoch " +
                    std::to_string(epoch) + (is_teacher ? " (teacher)" : " (student)"));
      loss_sum += loss;
      ++batches;

      Tensor<float> d_head({B, net.n_special, C});
      for (std::int64_t i = 0; i < B; ++i)
        std::copy_n(&d_logits.data[i * C], C, &d_head.data[i * net.n_special * C]);

      for (int b = 0; b < kNumBands; ++b) net.conv[b].zero_grad();
      net.trunk.zero_grad();
      fcdn_backward(net, cache, d_head, extra);
      if (cfg.share_conv_across_bands) accumulate_shared_conv_grads(net);
      if (opt.step() && cfg.share_conv_across_bands) sync_shared_conv_values(net);
    }

    const double val_acc = accuracy_of(predict_proba(net, bva, cfg.batch), bva.labels());
    out.history.push_back({epoch, is_teacher,
                           batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0,
                           seen > 0 ? static_cast<double>(correct) / static_cast<double>(seen)
                                    : 0.0,
                           val_acc});
    if (val_acc > out.best_val) {
      out.best_val = val_acc;
      out.best_epoch = epoch;
      best_snap = snapshot_values(net);
      since_best = 0;
    } else if (cfg.early_stop && ++since_best >= cfg.patience) {
      break;
    }
  }
  if (!best_snap.empty()) restore_values(net, best_snap);
  out.skipped = opt.steps_skipped();
  return out;
}

}  // namespace

FitResult fit_fcdn(const EegDataset& train, const EegDataset& val,
                   const FcdnConfig& cfg, std::uint64_t seed,
                   bool uniform_weights) {
  cfg.validate();
  train.validate();
  val.validate();
  require(train.n_channels() == cfg.n_channels && val.n_channels() == cfg.n_channels,
          "fit: dataset channel count must match the config");
  require(train.samples_per_trial >= cfg.min_input_len(),
          "fit: trials shorter than the conv receptive length");
  require(std::abs(train.fs - cfg.fs) < 1e-9, "fit: dataset sampling rate mismatch");
  require(val.n_trials() > 0, "fit: empty validation split");
  {
    std::vector<bool> present(static_cast<std::size_t>(cfg.n_classes), false);
    int distinct = 0;
    for (const int l : train.labels)
      if (!present.at(static_cast<std::size_t>(l))) {
        present[static_cast<std::size_t>(l)] = true;
        ++distinct;
      }
    require(distinct >= 2, "fit: degenerate labels, need at least 2 classes");
  }

  const BandedDataset btr = band_split(train, cfg.fir_order);
  const BandedDataset bva = band_split(val, cfg.fir_order);

  const auto bands = model_bands();
  std::array<ChannelWeights, kNumBands> weights;
  for (int b = 0; b < kNumBands; ++b) {
    if (uniform_weights) {
      weights[b].w.assign(static_cast<std::size_t>(cfg.n_channels), 1.0);
      weights[b].band = bands[b];
      weights[b].source_fingerprint = dataset_fingerprint(train);
      weights[b].degenerate = false;
    } else {
      weights[b] = band_channel_weights(train, bands[b], cfg.fir_order,
                                        cfg.plv_edge_trim);
    }
  }

  FitResult res;
  res.model = build_model(cfg, false);
  init_model(res.model, derive_seed(seed, {1}));
  res.model.weights = weights;
  res.model.fitted = true;
  res.model.channel_names = train.montage.channel_names;
  res.model.class_names = train.class_names;
  res.model.train_fingerprint = dataset_fingerprint(train);
  if (const auto pos = train.provenance.find("preprocess_hash="); pos != std::string::npos) {
    const auto end = train.provenance.find_first_of("; ", pos);
    res.model.preprocess_hash =
        train.provenance.substr(pos + 16, end == std::string::npos ? end : end - pos - 16);
  }

  auto teacher = std::make_unique<FcdnModel>(build_model(cfg, true));
  init_model(*teacher, derive_seed(seed, {2}));
  teacher->weights = weights;
  teacher->fitted = true;

  const auto teacher_out =
      train_phase(*teacher, nullptr, {}, btr, bva, cfg, seed, true);
  res.history = teacher_out.history;
  res.skipped_steps = teacher_out.skipped;

  // Fixed per-layer projections take teacher hidden states to student width.
  std::vector<Tensor<float>> proj;
  for (int i = 0; i < cfg.depth; ++i) {
    Tensor<float> p({teacher->embed_dim, res.model.embed_dim});
    Rng rng(derive_seed(seed, {0xF0, static_cast<std::uint64_t>(i)}));
    const double sd = 1.0 / std::sqrt(static_cast<double>(teacher->embed_dim));
    for (auto& v : p.data) v = static_cast<float>(rng.gaussian(0.0, sd));
    proj.push_back(std::move(p));
  }

  const auto student_out =
      train_phase(res.model, teacher.get(), proj, btr, bva, cfg, seed, false);
  for (const auto& h : student_out.history) res.history.push_back(h);
  res.best_epoch = student_out.best_epoch;
  res.best_val_acc = student_out.best_val;
  res.skipped_steps += student_out.skipped;
  res.model.trained_epochs = student_out.best_epoch;
  res.model.teacher = std::move(teacher);
  return res;
}

}  // namespace fcdn
