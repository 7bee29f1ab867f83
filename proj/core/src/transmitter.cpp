#include "noma/transmitter.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

namespace noma {

namespace {

constexpr double kPointTol = 1e-12;

std::vector<cplx> qpsk() { return gray_qam(4); }

// Amplitude of one QAM axis from its Gray bits (first bit is the sign).
double axis_level(const std::vector<int>& bits, std::size_t from) {
  if (from == bits.size()) return 1.0;
  const double span = static_cast<double>(1U << (bits.size() - from));
  return span - (1 - 2 * bits[from]) * axis_level(bits, from + 1);
}

Projection project(const Alphabet& a, std::size_t position) {
  Projection p;
  p.index.resize(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const cplx x = a.at(i, position);
    auto it = std::find_if(p.points.begin(), p.points.end(),
                           [&](const cplx& q) { return std::abs(q - x) < kPointTol; });
    if (it == p.points.end()) {
      p.index[i] = static_cast<std::uint16_t>(p.points.size());
      p.points.push_back(x);
    } else {
      p.index[i] = static_cast<std::uint16_t>(it - p.points.begin());
    }
  }
  return p;
}

// alphabet[i][t] == base[i] * spreading[t] for all i, t?
bool factor_rank_one(const Alphabet& a, std::vector<cplx>& base, std::vector<cplx>& spreading) {
  const std::size_t len = a.block_len();
  std::size_t ref = len;
  for (std::size_t t = 0; t < len && ref == len; ++t) {
    if (std::abs(a.at(0, t)) > kPointTol) ref = t;
  }
  if (ref == len) return false;
  spreading.assign(len, {});
  for (std::size_t t = 0; t < len; ++t) spreading[t] = a.at(0, t) / a.at(0, ref);
  base.assign(a.size(), {});
  for (std::size_t i = 0; i < a.size(); ++i) {
    base[i] = a.at(i, ref);
    for (std::size_t t = 0; t < len; ++t) {
      if (std::abs(a.at(i, t) - base[i] * spreading[t]) > 1e-9) return false;
    }
  }
  return true;
}

SchemeLayout layout_from_codebook(SchemeKind kind, std::size_t n_layers, std::size_t n_re,
                                  const Codebook& cb) {
  if (n_layers > cb.n_layers) {
    throw ConfigError("codebook holds " + std::to_string(cb.n_layers) + " layers, " +
                      std::to_string(n_layers) + " requested");
  }
  if (cb.block_size == 0 || n_re % cb.block_size != 0) {
    throw ConfigError("n_re must be a multiple of the codebook block size");
  }
  const std::size_t nb = n_re / cb.block_size;
  std::vector<std::vector<std::vector<std::size_t>>> footprints(n_layers);
  std::vector<AlphabetPtr> alphabets;
  for (std::size_t j = 0; j < n_layers; ++j) {
    std::vector<std::size_t> occupied;
    for (std::size_t r = 0; r < cb.block_size; ++r) {
      bool used = false;
      for (std::size_t i = 0; i < cb.m; ++i) used = used || std::abs(cb.at(j, i, r)) > kPointTol;
      if (used) occupied.push_back(r);
    }
    if (occupied.empty()) throw ConfigError("codebook layer " + std::to_string(j) + " is empty");
    std::vector<cplx> pts;
    for (std::size_t i = 0; i < cb.m; ++i) {
      for (auto r : occupied) pts.push_back(cb.at(j, i, r));
    }
    alphabets.push_back(std::make_shared<const Alphabet>(occupied.size(), std::move(pts)));
    footprints[j].resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
      for (auto r : occupied) footprints[j][b].push_back(b * cb.block_size + r);
    }
  }
  return make_layout(kind, n_re, cb.block_size, std::move(footprints), std::move(alphabets));
}

Codebook default_scma_codebook(std::size_t n_layers) {
  Codebook cb;
  cb.m = 4;
  cb.block_size = 4;
  cb.n_layers = n_layers;
  cb.values.assign(n_layers * cb.m * cb.block_size, {});
  const auto mother = qpsk();
  const auto& ind = scma_indicator();
  for (std::size_t j = 0; j < n_layers; ++j) {
    const cplx rot = std::polar(1.0, static_cast<double>(j) * std::numbers::pi / 12.0);
    for (std::size_t i = 0; i < cb.m; ++i) {
      for (auto r : ind[j]) cb.values[(j * cb.m + i) * cb.block_size + r] = mother[i] * rot;
    }
  }
  return cb;
}

Codebook default_nls_codebook(std::size_t n_layers, std::size_t spreading_length) {
  Codebook cb;
  cb.m = 4;
  cb.block_size = spreading_length;
  cb.n_layers = n_layers;
  cb.values.assign(n_layers * cb.m * cb.block_size, {});
  const auto q = qpsk();
  const double a = 1.0 / std::sqrt(2.0);
  const std::array<cplx, 4> chips{cplx{a, a}, cplx{-a, a}, cplx{-a, -a}, cplx{a, -a}};
  std::mt19937_64 rng(kSignatureSeed);
  for (std::size_t j = 0; j < n_layers; ++j) {
    std::vector<cplx> sig(spreading_length);
    for (auto& c : sig) c = chips[rng() % 4];
    for (std::size_t i = 0; i < cb.m; ++i) {
      for (std::size_t t = 0; t < spreading_length; ++t) {
        cb.values[(j * cb.m + i) * cb.block_size + t] = q[i] * sig[t];
      }
    }
  }
  return cb;
}

void normalize_codebook(Codebook& cb, double tol) {
  for (std::size_t j = 0; j < cb.n_layers; ++j) {
    double energy = 0.0;
    std::size_t occupied = 0;
    for (std::size_t r = 0; r < cb.block_size; ++r) {
      double e = 0.0;
      for (std::size_t i = 0; i < cb.m; ++i) e += std::norm(cb.at(j, i, r));
      if (e > 0.0) ++occupied;
      energy += e;
    }
    if (occupied == 0) throw ConfigError("codebook layer " + std::to_string(j) + " is empty");
    const double per_re = energy / static_cast<double>(cb.m * occupied);
    if (std::abs(per_re - 1.0) > tol) {
      throw ConfigError("codebook layer " + std::to_string(j) + " has energy " +
                        std::to_string(per_re) + " per occupied RE, expected 1");
    }
    const double g = 1.0 / std::sqrt(per_re);
    for (std::size_t i = 0; i < cb.m; ++i) {
      for (std::size_t r = 0; r < cb.block_size; ++r) {
        cb.values[(j * cb.m + i) * cb.block_size + r] *= g;
      }
    }
  }
}

}  // namespace

std::string to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::cb_ofdma: return "cb_ofdma";
    case SchemeKind::nls: return "nls";
    case SchemeKind::scma: return "scma";
  }
  return "unknown";
}

SchemeKind parse_scheme_kind(const std::string& text) {
  if (text == "cb_ofdma") return SchemeKind::cb_ofdma;
  if (text == "nls") return SchemeKind::nls;
  if (text == "scma") return SchemeKind::scma;
  throw ConfigError("unknown scheme '" + text + "' (expected cb_ofdma, nls or scma)");
}

const std::vector<std::vector<std::size_t>>& scma_indicator() {
  // Columns of the 4 x 6 factor matrix: every RE is shared by three layers.
  static const std::vector<std::vector<std::size_t>> ind{{0, 1}, {0, 2}, {0, 3},
                                                         {1, 2}, {1, 3}, {2, 3}};
  return ind;
}

std::vector<cplx> gray_qam(int order) {
  int bits = 0;
  while ((1 << bits) < order) ++bits;
  if (order < 4 || (1 << bits) != order || bits % 2 != 0) {
    throw ConfigError("QAM order must be an even power of two >= 4, got " + std::to_string(order));
  }
  const std::size_t nb = static_cast<std::size_t>(bits);
  const double scale = 1.0 / std::sqrt(2.0 * (order - 1) / 3.0);
  std::vector<cplx> pts(static_cast<std::size_t>(order));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<int> ib, qb;
    for (std::size_t b = 0; b < nb; ++b) (b % 2 == 0 ? ib : qb).push_back(label_bit(i, b, nb));
    const double re = (1 - 2 * ib[0]) * axis_level(ib, 1);
    const double im = (1 - 2 * qb[0]) * axis_level(qb, 1);
    pts[i] = cplx{re, im} * scale;
  }
  return pts;
}

std::optional<std::size_t> SchemeLayout::position_of(std::size_t layer, std::size_t re) const {
  const auto& fp = footprints[layer][re / block_size];
  auto it = std::find(fp.begin(), fp.end(), re);
  if (it == fp.end()) return std::nullopt;
  return static_cast<std::size_t>(it - fp.begin());
}

SchemeLayout make_layout(SchemeKind kind, std::size_t n_re, std::size_t block_size,
                         std::vector<std::vector<std::vector<std::size_t>>> footprints,
                         std::vector<AlphabetPtr> alphabets) {
  if (block_size == 0 || n_re == 0 || n_re % block_size != 0) {
    throw ConfigError("n_re (" + std::to_string(n_re) + ") must be a positive multiple of the block size (" +
                      std::to_string(block_size) + ")");
  }
  if (footprints.size() != alphabets.size() || footprints.empty()) {
    throw ContractError("layout: one footprint list and one alphabet per layer required");
  }
  SchemeLayout l;
  l.kind = kind;
  l.n_layers = footprints.size();
  l.n_re = n_re;
  l.block_size = block_size;
  l.d_f.assign(n_re, 0);
  l.m_p.assign(n_re, 0);
  const std::size_t nb = n_re / block_size;
  for (std::size_t j = 0; j < l.n_layers; ++j) {
    const auto& a = *alphabets[j];
    if (footprints[j].size() != nb) throw ContractError("layout: footprint needed for every block");
    if (std::abs(a.energy_per_position() - 1.0) > 1e-9) {
      throw ConfigError("layer " + std::to_string(j) + " alphabet does not have unit energy per RE");
    }
    std::vector<Projection> proj;
    for (std::size_t t = 0; t < a.block_len(); ++t) proj.push_back(project(a, t));
    for (std::size_t b = 0; b < nb; ++b) {
      auto& fp = footprints[j][b];
      std::sort(fp.begin(), fp.end());
      if (fp.size() != a.block_len() || std::adjacent_find(fp.begin(), fp.end()) != fp.end()) {
        throw ContractError("layout: footprint size must equal the alphabet block length");
      }
      for (std::size_t t = 0; t < fp.size(); ++t) {
        if (fp[t] / block_size != b) throw ContractError("layout: footprint leaves its block");
        ++l.d_f[fp[t]];
        l.m_p[fp[t]] = std::max(l.m_p[fp[t]], proj[t].points.size());
      }
    }
    l.projections.push_back(std::move(proj));
  }
  std::vector<std::vector<cplx>> spreading, base;
  bool spread = true;
  for (const auto& a : alphabets) {
    std::vector<cplx> b, s;
    spread = spread && factor_rank_one(*a, b, s);
    base.push_back(std::move(b));
    spreading.push_back(std::move(s));
  }
  if (spread) {
    l.spreading = std::move(spreading);
    l.base_points = std::move(base);
  }
  l.footprints = std::move(footprints);
  l.alphabets = std::move(alphabets);
  return l;
}

SchemeLayout build_scheme(SchemeKind kind, std::size_t n_layers, std::size_t n_re,
                          const SchemeParams& params) {
  if (n_layers == 0) throw ConfigError("at least one layer is required");
  switch (kind) {
    case SchemeKind::cb_ofdma: {
      auto a = std::make_shared<const Alphabet>(1, gray_qam(params.qam_order));
      std::vector<std::vector<std::vector<std::size_t>>> fp(n_layers);
      for (auto& layer : fp) {
        layer.resize(n_re);
        for (std::size_t k = 0; k < n_re; ++k) layer[k] = {k};
      }
      return make_layout(kind, n_re, 1, std::move(fp), std::vector<AlphabetPtr>(n_layers, a));
    }
    case SchemeKind::nls: {
      if (params.codebook) return layout_from_codebook(kind, n_layers, n_re, *params.codebook);
      if (params.spreading_length == 0) throw ConfigError("spreading length must be positive");
      return layout_from_codebook(kind, n_layers, n_re,
                                  default_nls_codebook(n_layers, params.spreading_length));
    }
    case SchemeKind::scma: {
      if (params.codebook) return layout_from_codebook(kind, n_layers, n_re, *params.codebook);
      if (n_layers > kScmaCapacity) {
        throw ConfigError("default SCMA layout supports at most 6 layers, got " +
                          std::to_string(n_layers));
      }
      return layout_from_codebook(kind, n_layers, n_re, default_scma_codebook(n_layers));
    }
  }
  throw ConfigError("unsupported scheme");
}

Codebook codebook_from_layout(const SchemeLayout& layout) {
  Codebook cb;
  cb.n_layers = layout.n_layers;
  cb.block_size = layout.block_size;
  cb.m = layout.alphabets.front()->size();
  cb.values.assign(cb.n_layers * cb.m * cb.block_size, {});
  for (std::size_t j = 0; j < layout.n_layers; ++j) {
    const auto& a = *layout.alphabets[j];
    if (a.size() != cb.m) throw ContractError("codebook export needs equal alphabet sizes");
    const auto& fp = layout.footprints[j][0];
    for (std::size_t i = 0; i < cb.m; ++i) {
      for (std::size_t t = 0; t < fp.size(); ++t) {
        cb.values[(j * cb.m + i) * cb.block_size + fp[t]] = a.at(i, t);
      }
    }
  }
  return cb;
}

std::string format_codebook(const Codebook& cb) {
  std::ostringstream os;
  os << cb.m << ' ' << cb.block_size << ' ' << cb.n_layers << '\n';
  os << std::setprecision(17);
  for (const auto& v : cb.values) os << v.real() << ' ' << v.imag() << '\n';
  return os.str();
}

Codebook parse_codebook(const std::string& text) {
  std::istringstream is(text);
  Codebook cb;
  if (!(is >> cb.m >> cb.block_size >> cb.n_layers) || cb.m < 2 || cb.block_size == 0 ||
      cb.n_layers == 0) {
    throw ConfigError("codebook: malformed header, expected 'M L n_layers'");
  }
  const std::size_t count = cb.m * cb.block_size * cb.n_layers;
  cb.values.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    double re = 0.0, im = 0.0;
    if (!(is >> re >> im)) {
      throw ConfigError("codebook: expected " + std::to_string(count) + " values, got " +
                        std::to_string(i));
    }
    cb.values.emplace_back(re, im);
  }
  normalize_codebook(cb, 1e-6);
  return cb;
}

Codebook load_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read codebook file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_codebook(ss.str());
}

void save_codebook(const Codebook& cb, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write codebook file: " + path);
  out << format_codebook(cb);
  if (!out) throw IoError("write failed: " + path);
}

std::vector<cplx> map_bits(std::size_t layer, std::span<const std::uint8_t> coded_bits,
                           const SchemeLayout& layout) {
  if (layer >= layout.n_layers) throw ContractError("map_bits: layer out of range");
  const auto& a = *layout.alphabets[layer];
  const std::size_t nb = a.bits_per_symbol();
  if (coded_bits.size() != layout.coded_bits(layer)) {
    throw ContractError("map_bits: expected " + std::to_string(layout.coded_bits(layer)) +
                        " coded bits, got " + std::to_string(coded_bits.size()));
  }
  std::vector<cplx> row(layout.n_re, cplx{});
  for (std::size_t b = 0; b < layout.n_blocks(); ++b) {
    std::size_t sym = 0;
    for (std::size_t t = 0; t < nb; ++t) sym = (sym << 1) | (coded_bits[b * nb + t] & 1U);
    const auto& fp = layout.footprints[layer][b];
    for (std::size_t t = 0; t < fp.size(); ++t) row[fp[t]] = a.at(sym, t);
  }
  return row;
}

TxGrid map_all(std::span<const Bits> coded_bits, const SchemeLayout& layout) {
  if (coded_bits.size() != layout.n_layers) throw ContractError("map_all: one bit vector per layer");
  TxGrid g;
  g.n_re = layout.n_re;
  for (std::size_t j = 0; j < layout.n_layers; ++j) g.symbols.push_back(map_bits(j, coded_bits[j], layout));
  return g;
}

}  // namespace noma
