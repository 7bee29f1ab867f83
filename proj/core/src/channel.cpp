#include "noma/channel.hpp"

#include <cmath>
#include <string>

namespace noma {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

cplx complex_normal(Rng& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(variance / 2.0));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

}  // namespace

Rng trial_rng(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t trial) {
  std::uint64_t s = splitmix64(master_seed);
  s = splitmix64(s ^ stream);
  s = splitmix64(s ^ (trial * 0x2545f4914f6cdd1dULL));
  return Rng(s);
}

ChannelRealization generate_channel(const SchemeLayout& layout, std::size_t n_rx,
                                    std::size_t coherence_re, Rng& rng) {
  if (n_rx == 0) throw ConfigError("at least one receive antenna is required");
  if (coherence_re == 0 || layout.n_re % coherence_re != 0) {
    throw ConfigError("coherence_re (" + std::to_string(coherence_re) + ") must divide n_re (" +
                      std::to_string(layout.n_re) + ")");
  }
  ChannelRealization ch;
  ch.n_layers = layout.n_layers;
  ch.n_re = layout.n_re;
  ch.n_rx = n_rx;
  ch.coherence_re = coherence_re;
  ch.h.resize(ch.n_layers * ch.n_re * n_rx);
  for (std::size_t j = 0; j < ch.n_layers; ++j) {
    for (std::size_t start = 0; start < ch.n_re; start += coherence_re) {
      for (std::size_t r = 0; r < n_rx; ++r) {
        const cplx c = complex_normal(rng, 1.0);
        for (std::size_t k = start; k < start + coherence_re; ++k) ch.at(j, k, r) = c;
      }
    }
  }
  return ch;
}

ReceivedGrid apply_channel(const TxGrid& tx, const ChannelRealization& ch,
                           std::span<const double> snr_db, Rng& rng, double noise_var) {
  if (tx.symbols.size() != ch.n_layers || tx.n_re != ch.n_re || snr_db.size() != ch.n_layers) {
    throw ContractError("apply_channel: grid, channel and SNR list disagree in size");
  }
  ReceivedGrid g;
  g.n_re = ch.n_re;
  g.n_rx = ch.n_rx;
  g.noise_var = noise_var;
  g.channel = ch;
  g.power.resize(ch.n_layers);
  for (std::size_t j = 0; j < ch.n_layers; ++j) {
    g.power[j] = noise_var * std::pow(10.0, snr_db[j] / 10.0);
  }
  g.y.assign(ch.n_re * ch.n_rx, cplx{});
  for (std::size_t k = 0; k < ch.n_re; ++k) {
    for (std::size_t r = 0; r < ch.n_rx; ++r) {
      cplx acc{};
      for (std::size_t j = 0; j < ch.n_layers; ++j) {
        acc += ch.at(j, k, r) * tx.symbols[j][k] * std::sqrt(g.power[j]);
      }
      if (noise_var > 0.0) acc += complex_normal(rng, noise_var);
      g.y_at(k, r) = acc;
    }
  }
  return g;
}

void cancel_layer(ReceivedGrid& grid, std::size_t layer, std::span<const cplx> symbols) {
  if (layer >= grid.power.size() || symbols.size() != grid.n_re) {
    throw ContractError("cancel_layer: layer or symbol row out of range");
  }
  for (std::size_t k = 0; k < grid.n_re; ++k) {
    if (symbols[k] == cplx{}) continue;
    for (std::size_t r = 0; r < grid.n_rx; ++r) grid.y_at(k, r) -= grid.gain(layer, k, r) * symbols[k];
  }
}

}  // namespace noma
