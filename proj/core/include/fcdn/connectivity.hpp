#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fcdn/dataset.hpp"
#include "fcdn/dsp.hpp"

namespace fcdn {

// Symmetric K x K phase-locking matrix for one band. Diagonal is 1 by
// convention (a channel is perfectly locked to itself).
struct PlvMatrix {
  int n_channels = 0;
  std::vector<double> values;  // row-major K x K
  BandDefinition band;
  std::int64_t n_trials = 0;
  std::int64_t n_timebins = 0;
  std::vector<std::string> channel_names;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n_channels + j]; }
  void validate() const;
};

// Drop n samples at each end of every phase series (filter edge transients).
PhaseTensor trim_phase_edges(const PhaseTensor& pt, int n_each_side);

// Number of samples excluded at each edge by default: the band-pass tap count.
inline constexpr int kPlvEdgeTrim = 31;

// |mean of e^{j(phi_a - phi_b)}| over all trials and retained time bins, for
// every unordered channel pair. Expects an edge-trimmed tensor.
PlvMatrix plv_matrix(const PhaseTensor& phases);

// Node strength: per-channel sum of locking values over all partners
// (diagonal excluded).
std::vector<double> channel_strength(const PlvMatrix& plv);

// Min-max-normalized node strengths; weakest channel maps to 0, strongest
// to 1. Constant strengths fall back to all-ones with the degenerate flag set.
struct ChannelWeights {
  std::vector<double> w;
  BandDefinition band;
  std::uint64_t source_fingerprint = 0;
  bool degenerate = false;

  void validate() const;
};

ChannelWeights normalize_weights(const std::vector<double>& strength,
                                 const BandDefinition& band,
                                 std::uint64_t source_fingerprint);

// Multiply every channel's samples by its weight.
EegDataset apply_channel_weights(const EegDataset& ds, const ChannelWeights& cw);

// Pearson r between the strict upper triangles of two same-shape matrices.
double plv_pearson_cc(const PlvMatrix& a, const PlvMatrix& b);

struct PlvEdge {
  int k1 = 0;
  int k2 = 0;
  double value = 0.0;
};

// Off-diagonal pairs with value strictly above tau, sorted descending.
std::vector<PlvEdge> threshold_edges(const PlvMatrix& plv, double tau = 0.9);

std::uint64_t plv_fingerprint(const PlvMatrix& plv);

// Full band pipeline: analytic phase -> edge trim -> PLV -> strengths ->
// min-max weights.
ChannelWeights band_channel_weights(const EegDataset& ds, const BandDefinition& band,
                                    int fir_order = 30, int edge_trim = kPlvEdgeTrim);

void export_plv_csv(const PlvMatrix& plv, const std::filesystem::path& path);
void export_edges_csv(const std::vector<PlvEdge>& edges,
                      const std::vector<std::string>& channel_names,
                      const std::filesystem::path& path);
void export_weights_csv(const ChannelWeights& cw,
                        const std::vector<std::string>& channel_names,
                        const std::filesystem::path& path);

}  // namespace fcdn
