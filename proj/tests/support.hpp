#pragma once

// Instance generators and independent reference implementations shared by
// the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "noma/channel.hpp"
#include "noma/coding.hpp"
#include "noma/detectors.hpp"
#include "noma/transmitter.hpp"

namespace noma::test {

struct Instance {
  SchemeLayout layout;
  ReceivedGrid grid;
  std::vector<Bits> bits;
  TxGrid tx;
};

inline Bits random_bits(std::size_t n, Rng& rng) {
  Bits b(n);
  for (auto& x : b) x = static_cast<std::uint8_t>(rng() & 1U);
  return b;
}

inline Instance transmit(SchemeLayout layout, std::size_t n_rx, double snr_db, Rng& rng,
                         std::size_t coherence_re = 1) {
  Instance inst;
  inst.layout = std::move(layout);
  for (std::size_t j = 0; j < inst.layout.n_layers; ++j) {
    inst.bits.push_back(random_bits(inst.layout.coded_bits(j), rng));
  }
  inst.tx = map_all(inst.bits, inst.layout);
  const auto ch = generate_channel(inst.layout, n_rx, coherence_re, rng);
  const std::vector<double> snr(inst.layout.n_layers, snr_db);
  inst.grid = apply_channel(inst.tx, ch, snr, rng);
  return inst;
}

inline Instance random_instance(SchemeKind kind, std::size_t n_layers, std::size_t n_re,
                                std::size_t n_rx, double snr_db, std::uint64_t seed,
                                const SchemeParams& params = {}) {
  auto rng = trial_rng(seed, 7, 0);
  return transmit(build_scheme(kind, n_layers, n_re, params), n_rx, snr_db, rng);
}

// y recomputed without noise from the stored channel and powers.
inline void strip_noise(ReceivedGrid& grid, const TxGrid& tx) {
  for (std::size_t k = 0; k < grid.n_re; ++k) {
    for (std::size_t r = 0; r < grid.n_rx; ++r) {
      cplx y{};
      for (std::size_t j = 0; j < tx.symbols.size(); ++j) y += grid.gain(j, k, r) * tx.symbols[j][k];
      grid.y_at(k, r) = y;
    }
  }
}

inline std::vector<LlrVector> random_priors(const SchemeLayout& layout, double scale, Rng& rng) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<LlrVector> p(layout.n_layers);
  for (std::size_t j = 0; j < layout.n_layers; ++j) {
    p[j].resize(layout.coded_bits(j));
    for (auto& x : p[j]) x = n(rng);
  }
  return p;
}

// Random M-ary alphabet over `len` REs, unit energy at every position.
inline AlphabetPtr random_alphabet(std::size_t m, std::size_t len, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<cplx> pts(m * len);
  for (auto& p : pts) p = {n(rng), n(rng)};
  for (std::size_t t = 0; t < len; ++t) {
    double e = 0.0;
    for (std::size_t i = 0; i < m; ++i) e += std::norm(pts[i * len + t]);
    const double s = std::sqrt(static_cast<double>(m) / e);
    for (std::size_t i = 0; i < m; ++i) pts[i * len + t] *= s;
  }
  return std::make_shared<const Alphabet>(len, std::move(pts));
}

// Single-block layout whose layer/RE factor graph is a forest: edges are
// drawn at random and any edge closing a cycle is dropped. Every layer keeps
// at least one RE.
inline SchemeLayout random_tree_layout(std::size_t n_layers, std::size_t n_re, std::size_t m, Rng& rng) {
  for (;;) {
    std::vector<std::size_t> parent(n_layers + n_re);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (std::size_t j = 0; j < n_layers; ++j) {
      for (std::size_t k = 0; k < n_re; ++k) edges.emplace_back(j, k);
    }
    std::shuffle(edges.begin(), edges.end(), rng);
    std::vector<std::vector<std::size_t>> fp(n_layers);
    for (auto [j, k] : edges) {
      if (rng() % 3 == 0) continue;
      const auto a = find(j), b = find(n_layers + k);
      if (a == b) continue;
      parent[a] = b;
      fp[j].push_back(k);
    }
    if (std::any_of(fp.begin(), fp.end(), [](const auto& f) { return f.empty(); })) continue;
    std::vector<std::vector<std::vector<std::size_t>>> footprints(n_layers);
    std::vector<AlphabetPtr> alphabets;
    for (std::size_t j = 0; j < n_layers; ++j) {
      std::sort(fp[j].begin(), fp[j].end());
      footprints[j] = {fp[j]};
      alphabets.push_back(random_alphabet(m, fp[j].size(), rng));
    }
    return make_layout(SchemeKind::scma, n_re, n_re, std::move(footprints), std::move(alphabets));
  }
}

inline double max_abs_diff(const std::vector<LlrVector>& a, const std::vector<LlrVector>& b) {
  double gap = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    if (a[j].size() != b[j].size()) return INFINITY;
    for (std::size_t i = 0; i < a[j].size(); ++i) gap = std::max(gap, std::abs(a[j][i] - b[j][i]));
  }
  return gap;
}

// Bitwise long division of the message, augmented by 16 zero bits after
// the 0xFFFF preset is folded into its first 16 bits.
inline std::uint16_t crc16_long_division(const Bits& message) {
  std::vector<std::uint8_t> dividend(message.begin(), message.end());
  dividend.resize(message.size() + 16, 0);
  for (std::size_t i = 0; i < 16 && i < dividend.size(); ++i) dividend[i] ^= 1U;
  const std::uint32_t poly = 0x11021;  // x^16 + x^12 + x^5 + 1
  for (std::size_t i = 0; i + 16 < dividend.size(); ++i) {
    if (!dividend[i]) continue;
    for (int d = 0; d <= 16; ++d) dividend[i + d] ^= static_cast<std::uint8_t>((poly >> (16 - d)) & 1U);
  }
  std::uint16_t rem = 0;
  for (std::size_t i = dividend.size() - 16; i < dividend.size(); ++i) {
    rem = static_cast<std::uint16_t>((rem << 1) | dividend[i]);
  }
  return rem;
}

inline Bits ascii_bits(const std::string& text) {
  Bits bits;
  for (unsigned char c : text) {
    for (int i = 7; i >= 0; --i) bits.push_back(static_cast<std::uint8_t>((c >> i) & 1U));
  }
  return bits;
}

// Nearest alphabet symbol per block, written back as its label bits.
inline Bits hard_demap(std::size_t layer, const std::vector<cplx>& row, const SchemeLayout& layout) {
  const auto& a = *layout.alphabets[layer];
  const auto nb = a.bits_per_symbol();
  Bits out;
  for (std::size_t b = 0; b < layout.n_blocks(); ++b) {
    const auto& fp = layout.footprints[layer][b];
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t i = 0; i < a.size(); ++i) {
      double d = 0.0;
      for (std::size_t t = 0; t < fp.size(); ++t) d += std::norm(row[fp[t]] - a.at(i, t));
      if (d < best_d) best_d = d, best = i;
    }
    for (std::size_t bit = 0; bit < nb; ++bit) out.push_back(static_cast<std::uint8_t>(label_bit(best, bit, nb)));
  }
  return out;
}

}  // namespace noma::test
