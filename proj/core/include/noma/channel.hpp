#pragma once

// Block-fading Rayleigh channel with AWGN and ideal CSI.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "noma/transmitter.hpp"
#include "noma/types.hpp"

namespace noma {

using Rng = std::mt19937_64;

// Independent stream for one Monte Carlo trial, from a splitmix64 mix of the
// three keys. Results never depend on the order trials are executed in.
Rng trial_rng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t trial);

inline constexpr std::size_t kDefaultCoherenceRe = 12;

struct ChannelRealization {
  std::size_t n_layers = 0;
  std::size_t n_re = 0;
  std::size_t n_rx = 0;
  std::size_t coherence_re = 0;
  std::vector<cplx> h;  // [(layer * n_re + re) * n_rx + rx]

  cplx at(std::size_t layer, std::size_t re, std::size_t rx) const {
    return h[(layer * n_re + re) * n_rx + rx];
  }
  cplx& at(std::size_t layer, std::size_t re, std::size_t rx) {
    return h[(layer * n_re + re) * n_rx + rx];
  }
};

struct ReceivedGrid {
  std::size_t n_re = 0;
  std::size_t n_rx = 0;
  std::vector<cplx> y;  // [re * n_rx + rx]
  double noise_var = 1.0;
  ChannelRealization channel;
  std::vector<double> power;  // linear transmit power per layer

  cplx y_at(std::size_t re, std::size_t rx) const { return y[re * n_rx + rx]; }
  cplx& y_at(std::size_t re, std::size_t rx) { return y[re * n_rx + rx]; }
  // Effective channel h * sqrt(p) seen by the detectors.
  cplx gain(std::size_t layer, std::size_t re, std::size_t rx) const {
    return channel.at(layer, re, rx) * std::sqrt(power[layer]);
  }
};

// CN(0,1) coefficients, one per coherence block per (layer, antenna).
ChannelRealization generate_channel(const SchemeLayout& layout, std::size_t n_rx,
                                    std::size_t coherence_re, Rng& rng);

// y = sum_j h_j x_j sqrt(p_j) + n with n ~ CN(0, noise_var) and
// p_j = noise_var * 10^(snr_db[j] / 10), so snr_db is the per-UE per-antenna
// average received Es/N0 on occupied REs.
ReceivedGrid apply_channel(const TxGrid& tx, const ChannelRealization& ch,
                           std::span<const double> snr_db, Rng& rng, double noise_var = 1.0);

// Subtracts layer j's contribution sqrt(p_j) h_j x_j from the grid.
void cancel_layer(ReceivedGrid& grid, std::size_t layer, std::span<const cplx> symbols);

}  // namespace noma
