#include "fcdn/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fcdn/error.hpp"
#include "fcdn/hashing.hpp"
#include "fcdn/parallel.hpp"

namespace fcdn {

void PlvMatrix::validate() const {
  require(n_channels >= 2, "plv matrix: need at least two channels");
  require(values.size() == static_cast<std::size_t>(n_channels) * n_channels,
          "plv matrix: value count mismatch");
  for (int i = 0; i < n_channels; ++i) {
    require(std::abs(at(i, i) - 1.0) < 1e-12, "plv matrix: diagonal must be 1");
    for (int j = 0; j < n_channels; ++j) {
      const double v = at(i, j);
      require(v >= 0.0 && v <= 1.0 + 1e-12, "plv matrix: entry outside [0,1]");
      require(std::abs(v - at(j, i)) < 1e-12, "plv matrix: asymmetry");
    }
  }
}

PhaseTensor trim_phase_edges(const PhaseTensor& pt, int n_each_side) {
  require(n_each_side >= 0, "trim_phase_edges: negative trim");
  if (n_each_side == 0) return pt;
  require(pt.n_samples > 2 * n_each_side,
          "trim_phase_edges: trim would consume the whole series");
  PhaseTensor out;
  out.n_trials = pt.n_trials;
  out.n_channels = pt.n_channels;
  out.n_samples = pt.n_samples - 2 * n_each_side;
  out.fs = pt.fs;
  out.band = pt.band;
  out.channel_names = pt.channel_names;
  out.phase.resize(static_cast<std::size_t>(out.n_trials) * out.n_channels * out.n_samples);
  std::size_t off = 0;
  for (std::int64_t t = 0; t < pt.n_trials; ++t) {
    for (int k = 0; k < pt.n_channels; ++k) {
      auto src = pt.trial_channel(t, k);
      std::copy_n(src.data() + n_each_side, out.n_samples, out.phase.data() + off);
      off += out.n_samples;
    }
  }
  return out;
}

PlvMatrix plv_matrix(const PhaseTensor& phases) {
  const int K = phases.n_channels;
  require(K >= 2, "plv_matrix: need at least two channels");
  require(phases.n_trials >= 1 && phases.n_samples >= 1, "plv_matrix: empty tensor");
  for (float p : phases.phase)
    require(std::isfinite(p), "plv_matrix: non-finite phase value");

  // Precompute unit phasors per (trial, channel); each pair then reduces to
  // two fused dot products instead of a complex exponential per sample.
  const std::int64_t samples = phases.n_trials * phases.n_samples;
  std::vector<double> cosp(static_cast<std::size_t>(K) * samples);
  std::vector<double> sinp(static_cast<std::size_t>(K) * samples);
  for (int k = 0; k < K; ++k) {
    double* ck = cosp.data() + static_cast<std::size_t>(k) * samples;
    double* sk = sinp.data() + static_cast<std::size_t>(k) * samples;
    std::int64_t pos = 0;
    for (std::int64_t t = 0; t < phases.n_trials; ++t) {
      auto ph = phases.trial_channel(t, k);
      for (std::int64_t i = 0; i < phases.n_samples; ++i, ++pos) {
        ck[pos] = std::cos(static_cast<double>(ph[i]));
        sk[pos] = std::sin(static_cast<double>(ph[i]));
      }
    }
  }

  PlvMatrix out;
  out.n_channels = K;
  out.band = phases.band;
  out.n_trials = phases.n_trials;
  out.n_timebins = phases.n_samples;
  out.channel_names = phases.channel_names;
  out.values.assign(static_cast<std::size_t>(K) * K, 0.0);
  for (int k = 0; k < K; ++k) out.values[static_cast<std::size_t>(k) * K + k] = 1.0;

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(K) * (K - 1) / 2);
  for (int a = 0; a < K; ++a)
    for (int b = a + 1; b < K; ++b) pairs.emplace_back(a, b);

  parallel_for(static_cast<std::int64_t>(pairs.size()), [&](std::int64_t p) {
    const auto [a, b] = pairs[static_cast<std::size_t>(p)];
    const double* ca = cosp.data() + static_cast<std::size_t>(a) * samples;
    const double* sa = sinp.data() + static_cast<std::size_t>(a) * samples;
    const double* cb = cosp.data() + static_cast<std::size_t>(b) * samples;
    const double* sb = sinp.data() + static_cast<std::size_t>(b) * samples;
    // e^{j(phi_a - phi_b)} summed: real = cos a cos b + sin a sin b,
    // imag = sin a cos b - cos a sin b.
    double re = 0.0, im = 0.0;
    for (std::int64_t i = 0; i < samples; ++i) {
      re += ca[i] * cb[i] + sa[i] * sb[i];
      im += sa[i] * cb[i] - ca[i] * sb[i];
    }
    const double plv =
        std::min(1.0, std::hypot(re, im) / static_cast<double>(samples));
    out.values[static_cast<std::size_t>(a) * K + b] = plv;
    out.values[static_cast<std::size_t>(b) * K + a] = plv;
  });

  out.validate();
  return out;
}

std::vector<double> channel_strength(const PlvMatrix& plv) {
  plv.validate();
  std::vector<double> s(plv.n_channels, 0.0);
  for (int k = 0; k < plv.n_channels; ++k) {
    double acc = 0.0;
    for (int j = 0; j < plv.n_channels; ++j)
      if (j != k) acc += plv.at(k, j);
    s[k] = acc;
  }
  return s;
}

void ChannelWeights::validate() const {
  require(w.size() >= 2, "channel weights: need at least two entries");
  for (double v : w)
    require(v >= 0.0 && v <= 1.0 + 1e-12, "channel weights: entry outside [0,1]");
}

ChannelWeights normalize_weights(const std::vector<double>& strength,
                                 const BandDefinition& band,
                                 std::uint64_t source_fingerprint) {
  require(strength.size() >= 2, "normalize_weights: need at least two strengths");
  const auto [mn_it, mx_it] = std::minmax_element(strength.begin(), strength.end());
  const double mn = *mn_it, mx = *mx_it;

  ChannelWeights cw;
  cw.band = band;
  cw.source_fingerprint = source_fingerprint;
  if (mx - mn < 1e-12) {
    cw.w.assign(strength.size(), 1.0);
    cw.degenerate = true;
  } else {
    cw.w.resize(strength.size());
    for (std::size_t k = 0; k < strength.size(); ++k)
      cw.w[k] = (strength[k] - mn) / (mx - mn);
  }
  cw.validate();
  return cw;
}

EegDataset apply_channel_weights(const EegDataset& ds, const ChannelWeights& cw) {
  require(static_cast<int>(cw.w.size()) == ds.n_channels(),
          "apply_channel_weights: weight length does not match channel count");
  EegDataset out = ds;
  for (std::int64_t t = 0; t < out.n_trials(); ++t) {
    for (int k = 0; k < out.n_channels(); ++k) {
      const float wk = static_cast<float>(cw.w[k]);
      for (float& v : out.trial_channel_mut(t, k)) v *= wk;
    }
  }
  out.append_provenance("channel_weights " + cw.band.name);
  return out;
}

static std::vector<double> upper_triangle(const PlvMatrix& m) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(m.n_channels) * (m.n_channels - 1) / 2);
  for (int a = 0; a < m.n_channels; ++a)
    for (int b = a + 1; b < m.n_channels; ++b) v.push_back(m.at(a, b));
  return v;
}

double plv_pearson_cc(const PlvMatrix& a, const PlvMatrix& b) {
  require(a.n_channels == b.n_channels, "plv_pearson_cc: channel count mismatch");
  require(a.band.name == b.band.name, "plv_pearson_cc: band mismatch");
  const auto x = upper_triangle(a);
  const auto y = upper_triangle(b);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, "plv_pearson_cc: zero-variance triangle");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<PlvEdge> threshold_edges(const PlvMatrix& plv, double tau) {
  require(tau >= 0.0 && tau <= 1.0, "threshold_edges: tau must be in [0,1]");
  std::vector<PlvEdge> edges;
  for (int a = 0; a < plv.n_channels; ++a)
    for (int b = a + 1; b < plv.n_channels; ++b)
      if (plv.at(a, b) > tau) edges.push_back({a, b, plv.at(a, b)});
  std::stable_sort(edges.begin(), edges.end(),
                   [](const PlvEdge& x, const PlvEdge& y) { return x.value > y.value; });
  return edges;
}

std::uint64_t plv_fingerprint(const PlvMatrix& plv) {
  Fnv1a h;
  h.update(plv.band.name);
  h.update_i64(plv.n_channels);
  h.update_i64(plv.n_trials);
  h.update_i64(plv.n_timebins);
  for (const auto& c : plv.channel_names) h.update(c);
  for (double v : plv.values) h.update_f64(v);
  return h.digest();
}

ChannelWeights band_channel_weights(const EegDataset& ds, const BandDefinition& band,
                                    int fir_order, int edge_trim) {
  auto phases = analytic_phase(ds, band, fir_order);
  auto trimmed = trim_phase_edges(phases, edge_trim);
  auto plv = plv_matrix(trimmed);
  return normalize_weights(channel_strength(plv), band, plv_fingerprint(plv));
}

void export_plv_csv(const PlvMatrix& plv, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "channel";
  for (const auto& c : plv.channel_names) out << ',' << c;
  out << "\n";
  for (int i = 0; i < plv.n_channels; ++i) {
    out << plv.channel_names[i];
    for (int j = 0; j < plv.n_channels; ++j) {
      char cell[32];
      std::snprintf(cell, sizeof cell, ",%.9g", plv.at(i, j));
      out << cell;
    }
    out << "\n";
  }
}

void export_edges_csv(const std::vector<PlvEdge>& edges,
                      const std::vector<std::string>& channel_names,
                      const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "ch1,ch2,plv\n";
  for (const auto& e : edges) {
    char line[96];
    std::snprintf(line, sizeof line, "%s,%s,%.9g\n", channel_names[e.k1].c_str(),
                  channel_names[e.k2].c_str(), e.value);
    out << line;
  }
}

void export_weights_csv(const ChannelWeights& cw,
                        const std::vector<std::string>& channel_names,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "channel,weight\n";
  for (std::size_t k = 0; k < cw.w.size(); ++k) {
    char line[64];
    std::snprintf(line, sizeof line, "%s,%.9g\n", channel_names[k].c_str(), cw.w[k]);
    out << line;
  }
}

}  // namespace fcdn
