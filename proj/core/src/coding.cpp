#include "noma/coding.hpp"
#include "noma/messages.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <utility>

namespace noma {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Variable-to-check messages are clipped here before the tanh.
constexpr double kMessageClip = 40.0;
constexpr double kTanhClip = 1.0 - 1e-15;

using DenseRow = std::vector<std::uint64_t>;

std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }
bool get_bit(const DenseRow& r, std::size_t i) { return (r[i / 64] >> (i % 64)) & 1U; }
void set_bit(DenseRow& r, std::size_t i) { r[i / 64] |= std::uint64_t{1} << (i % 64); }
void xor_into(DenseRow& dst, const DenseRow& src) {
  for (std::size_t w = 0; w < dst.size(); ++w) dst[w] ^= src[w];
}

std::vector<DenseRow> to_dense(const SparseBinaryMatrix& h) {
  std::vector<DenseRow> d(h.rows, DenseRow(words_for(h.cols), 0));
  for (std::size_t r = 0; r < h.rows; ++r) {
    for (auto c : h.row_entries[r]) d[r][c / 64] ^= std::uint64_t{1} << (c % 64);
  }
  return d;
}

void validate(const SparseBinaryMatrix& h) {
  if (h.row_entries.size() != h.rows) throw ContractError("parity check: row count mismatch");
  for (const auto& row : h.row_entries) {
    for (auto c : row) {
      if (c >= h.cols) throw ContractError("parity check: column index out of range");
    }
  }
}

// Column-by-column (3,6) placement. Returns false when the greedy placement
// runs out of distinct rows.
bool place_regular(std::size_t n, std::mt19937_64& rng, SparseBinaryMatrix& out) {
  constexpr int kColWeight = 3;
  constexpr int kRowWeight = 6;
  const std::size_t m = n / 2;
  std::vector<int> capacity(m, kRowWeight);
  std::vector<std::uint8_t> share(m * m, 0);  // rows already sharing a column
  std::vector<std::vector<std::uint32_t>> rows(m);

  std::vector<std::uint32_t> chosen;
  std::vector<std::uint32_t> pool;
  for (std::size_t c = 0; c < n; ++c) {
    chosen.clear();
    for (int w = 0; w < kColWeight; ++w) {
      int max_cap = 0;
      for (std::size_t r = 0; r < m; ++r) {
        if (std::find(chosen.begin(), chosen.end(), r) == chosen.end()) {
          max_cap = std::max(max_cap, capacity[r]);
        }
      }
      if (max_cap == 0) return false;
      // Near-max capacity keeps the rows balanced so the last columns still
      // find distinct rows; among those, prefer rows that close no 4-cycle.
      auto eligible = [&](std::size_t r, bool strict) {
        if (capacity[r] == 0 || capacity[r] < max_cap - 1) return false;
        if (std::find(chosen.begin(), chosen.end(), r) != chosen.end()) return false;
        if (!strict) return true;
        for (auto q : chosen) {
          if (share[r * m + q]) return false;
        }
        return true;
      };
      pool.clear();
      for (std::size_t r = 0; r < m; ++r) {
        if (eligible(r, true)) pool.push_back(static_cast<std::uint32_t>(r));
      }
      if (pool.empty()) {
        for (std::size_t r = 0; r < m; ++r) {
          if (eligible(r, false)) pool.push_back(static_cast<std::uint32_t>(r));
        }
      }
      if (pool.empty()) return false;
      std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
      chosen.push_back(pool[pick(rng)]);
    }
    for (auto r : chosen) {
      --capacity[r];
      rows[r].push_back(static_cast<std::uint32_t>(c));
      for (auto q : chosen) share[r * m + q] = 1;
    }
  }
  out.rows = m;
  out.cols = n;
  out.row_entries = std::move(rows);
  return true;
}

// Permutes columns so that the last `rows` columns are linearly independent.
// Returns false if the matrix is rank deficient.
bool move_pivots_to_parity(SparseBinaryMatrix& h) {
  auto dense = to_dense(h);
  const std::size_t m = h.rows;
  const std::size_t n = h.cols;
  std::vector<std::size_t> pivots;
  std::size_t row = 0;
  for (std::size_t cc = 0; cc < n && row < m; ++cc) {
    const std::size_t col = n - 1 - cc;
    std::size_t sel = row;
    while (sel < m && !get_bit(dense[sel], col)) ++sel;
    if (sel == m) continue;
    std::swap(dense[row], dense[sel]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r != row && get_bit(dense[r], col)) xor_into(dense[r], dense[row]);
    }
    pivots.push_back(col);
    ++row;
  }
  if (pivots.size() < m) return false;

  std::vector<std::uint32_t> perm(n);  // perm[old] = new
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<bool> is_pivot(n, false);
  for (auto p : pivots) is_pivot[p] = true;
  std::vector<std::size_t> free_parity_slots;
  for (std::size_t c = n - m; c < n; ++c) {
    if (!is_pivot[c]) free_parity_slots.push_back(c);
  }
  std::size_t slot = 0;
  for (auto p : pivots) {
    if (p < n - m) {
      const std::size_t target = free_parity_slots[slot++];
      std::swap(perm[p], perm[target]);
    }
  }
  for (auto& row_cols : h.row_entries) {
    for (auto& c : row_cols) c = perm[c];
    std::sort(row_cols.begin(), row_cols.end());
  }
  return true;
}

}  // namespace

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bits) {
  std::uint16_t reg = 0xFFFF;
  for (auto b : bits) {
    const bool top = ((reg >> 15) & 1U) != (b & 1U);
    reg = static_cast<std::uint16_t>(reg << 1);
    if (top) reg ^= 0x1021;
  }
  return reg;
}

Bits crc_attach(std::span<const std::uint8_t> payload) {
  if (payload.empty()) throw ContractError("crc_attach: empty payload");
  Bits out(payload.begin(), payload.end());
  const auto crc = crc16_ccitt_false(payload);
  for (int i = 15; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((crc >> i) & 1U));
  return out;
}

bool crc_check(std::span<const std::uint8_t> bits_with_crc) {
  if (bits_with_crc.size() <= kCrcWidth) return false;
  const auto payload = bits_with_crc.first(bits_with_crc.size() - kCrcWidth);
  const auto crc = crc16_ccitt_false(payload);
  for (std::size_t i = 0; i < kCrcWidth; ++i) {
    const auto expected = static_cast<std::uint8_t>((crc >> (15 - i)) & 1U);
    if ((bits_with_crc[payload.size() + i] & 1U) != expected) return false;
  }
  return true;
}

std::vector<std::vector<std::uint32_t>> SparseBinaryMatrix::column_entries() const {
  std::vector<std::vector<std::uint32_t>> cols_out(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto c : row_entries[r]) cols_out[c].push_back(static_cast<std::uint32_t>(r));
  }
  return cols_out;
}

std::size_t SparseBinaryMatrix::rank() const {
  auto dense = to_dense(*this);
  std::size_t rank = 0;
  for (std::size_t col = 0; col < cols && rank < rows; ++col) {
    std::size_t sel = rank;
    while (sel < rows && !get_bit(dense[sel], col)) ++sel;
    if (sel == rows) continue;
    std::swap(dense[rank], dense[sel]);
    for (std::size_t r = rank + 1; r < rows; ++r) {
      if (get_bit(dense[r], col)) xor_into(dense[r], dense[rank]);
    }
    ++rank;
  }
  return rank;
}

Bits SparseBinaryMatrix::multiply(std::span<const std::uint8_t> v) const {
  if (v.size() != cols) throw ContractError("parity check multiply: length mismatch");
  Bits s(rows, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    std::uint8_t acc = 0;
    for (auto c : row_entries[r]) acc ^= v[c] & 1U;
    s[r] = acc;
  }
  return s;
}

std::string to_alist(const SparseBinaryMatrix& h) {
  const auto cols = h.column_entries();
  std::size_t max_col = 0;
  std::size_t max_row = 0;
  for (const auto& c : cols) max_col = std::max(max_col, c.size());
  for (const auto& r : h.row_entries) max_row = std::max(max_row, r.size());
  std::ostringstream os;
  os << h.cols << ' ' << h.rows << '\n' << max_col << ' ' << max_row << '\n';
  for (std::size_t c = 0; c < h.cols; ++c) os << (c ? " " : "") << cols[c].size();
  os << '\n';
  for (std::size_t r = 0; r < h.rows; ++r) os << (r ? " " : "") << h.row_entries[r].size();
  os << '\n';
  auto emit = [&os](const std::vector<std::uint32_t>& list, std::size_t width) {
    for (std::size_t i = 0; i < width; ++i) {
      if (i) os << ' ';
      os << (i < list.size() ? list[i] + 1 : 0);
    }
    os << '\n';
  };
  for (const auto& c : cols) emit(c, max_col);
  for (const auto& r : h.row_entries) emit(r, max_row);
  return os.str();
}

SparseBinaryMatrix from_alist(const std::string& text) {
  std::istringstream is(text);
  std::size_t n = 0, m = 0, max_col = 0, max_row = 0;
  if (!(is >> n >> m >> max_col >> max_row) || n == 0 || m == 0) {
    throw ContractError("alist: malformed header");
  }
  std::vector<std::size_t> col_w(n), row_w(m);
  for (auto& w : col_w) is >> w;
  for (auto& w : row_w) is >> w;
  SparseBinaryMatrix h;
  h.rows = m;
  h.cols = n;
  h.row_entries.assign(m, {});
  std::vector<std::vector<std::uint32_t>> from_cols(n);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t i = 0; i < max_col; ++i) {
      std::size_t r = 0;
      if (!(is >> r)) throw ContractError("alist: truncated column lists");
      if (r > m) throw ContractError("alist: row index out of range");
      if (r) from_cols[c].push_back(static_cast<std::uint32_t>(r - 1));
    }
    if (from_cols[c].size() != col_w[c]) throw ContractError("alist: column weight mismatch");
  }
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t i = 0; i < max_row; ++i) {
      std::size_t c = 0;
      if (!(is >> c)) throw ContractError("alist: truncated row lists");
      if (c > n) throw ContractError("alist: column index out of range");
      if (c) h.row_entries[r].push_back(static_cast<std::uint32_t>(c - 1));
    }
    if (h.row_entries[r].size() != row_w[r]) throw ContractError("alist: row weight mismatch");
    std::sort(h.row_entries[r].begin(), h.row_entries[r].end());
  }
  // Both halves of the file must describe the same matrix.
  for (std::size_t c = 0; c < n; ++c) {
    for (auto r : from_cols[c]) {
      const auto& row = h.row_entries[r];
      if (!std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(c))) {
        throw ContractError("alist: column and row lists disagree");
      }
    }
  }
  return h;
}

CodeConfig::CodeConfig(SparseBinaryMatrix parity_check, std::size_t payload_bits,
                       int bp_iterations)
    : h_(std::move(parity_check)), bp_iterations_(bp_iterations) {
  validate(h_);
  if (h_.rows == 0 || h_.rows >= h_.cols) {
    throw ContractError("parity check must have fewer rows than columns");
  }
  coded_bits_ = h_.cols;
  info_bits_ = h_.cols - h_.rows;
  payload_bits_ = payload_bits;
  if (payload_bits_ == 0 || payload_bits_ + kCrcWidth > info_bits_) {
    throw ConfigError("transport block of " + std::to_string(payload_bits_) +
                      " bits plus CRC does not fit " + std::to_string(info_bits_) + " info bits");
  }

  // Reduce [A | B] to [B^-1 A | I] over GF(2).
  const std::size_t m = h_.rows;
  const std::size_t k = info_bits_;
  auto dense = to_dense(h_);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t col = k + i;
    std::size_t sel = i;
    while (sel < m && !get_bit(dense[sel], col)) ++sel;
    if (sel == m) {
      throw ContractError("parity check: parity columns are not invertible (rank deficient)");
    }
    std::swap(dense[i], dense[sel]);
    for (std::size_t r = 0; r < m; ++r) {
      if (r != i && get_bit(dense[r], col)) xor_into(dense[r], dense[i]);
    }
  }
  generator_.assign(m, DenseRow(words_for(k), 0));
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      if (get_bit(dense[r], c)) set_bit(generator_[r], c);
    }
  }

  const auto cols = h_.column_entries();
  edges_.row_start.assign(m + 1, 0);
  for (std::size_t r = 0; r < m; ++r) {
    edges_.row_start[r + 1] = edges_.row_start[r] + static_cast<std::uint32_t>(h_.row_entries[r].size());
    for (auto c : h_.row_entries[r]) edges_.edge_var.push_back(c);
  }
  edges_.var_start.assign(coded_bits_ + 1, 0);
  std::vector<std::vector<std::uint32_t>> var_edge_lists(coded_bits_);
  for (std::uint32_t e = 0; e < edges_.edge_var.size(); ++e) {
    var_edge_lists[edges_.edge_var[e]].push_back(e);
  }
  for (std::size_t v = 0; v < coded_bits_; ++v) {
    edges_.var_start[v + 1] = edges_.var_start[v] + static_cast<std::uint32_t>(var_edge_lists[v].size());
    edges_.var_edges.insert(edges_.var_edges.end(), var_edge_lists[v].begin(), var_edge_lists[v].end());
  }
}

CodeConfig make_regular_ldpc(std::size_t coded_bits, std::size_t payload_bits, std::uint64_t seed,
                             int bp_iterations) {
  if (coded_bits < 12 || coded_bits % 2 != 0) {
    throw ConfigError("regular LDPC length must be even and at least 12, got " +
                      std::to_string(coded_bits));
  }
  if (payload_bits == 0) payload_bits = coded_bits / 2 - kCrcWidth;
  // Attempts use consecutive seeds; the first full-rank placement wins.
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    std::mt19937_64 rng(seed + attempt);
    SparseBinaryMatrix h;
    if (!place_regular(coded_bits, rng, h)) continue;
    if (!move_pivots_to_parity(h)) continue;
    return CodeConfig(std::move(h), payload_bits, bp_iterations);
  }
  throw ConfigError("could not construct a full-rank (3,6)-regular code of length " +
                    std::to_string(coded_bits));
}

CodeConfig default_code() { return make_regular_ldpc(1024, 480); }

Bits build_info_block(std::span<const std::uint8_t> payload, const CodeConfig& cfg) {
  if (payload.size() != cfg.payload_bits()) {
    throw ContractError("build_info_block: payload must have " +
                        std::to_string(cfg.payload_bits()) + " bits");
  }
  Bits info = crc_attach(payload);
  info.resize(cfg.info_bits(), 0);
  return info;
}

Bits ldpc_encode(std::span<const std::uint8_t> info, const CodeConfig& cfg) {
  if (info.size() != cfg.info_bits()) {
    throw ContractError("ldpc_encode: expected " + std::to_string(cfg.info_bits()) +
                        " info bits, got " + std::to_string(info.size()));
  }
  DenseRow packed(words_for(info.size()), 0);
  for (std::size_t i = 0; i < info.size(); ++i) {
    if (info[i] & 1U) set_bit(packed, i);
  }
  Bits cw(info.begin(), info.end());
  cw.resize(cfg.coded_bits(), 0);
  const auto& gen = cfg.parity_generator();
  for (std::size_t r = 0; r < gen.size(); ++r) {
    std::uint64_t acc = 0;
    for (std::size_t w = 0; w < packed.size(); ++w) acc ^= packed[w] & gen[r][w];
    cw[cfg.info_bits() + r] = static_cast<std::uint8_t>(std::popcount(acc) & 1);
  }
  return cw;
}

Bits DecodeResult::payload(const CodeConfig& cfg) const {
  return Bits(hard_bits.begin(), hard_bits.begin() + static_cast<std::ptrdiff_t>(cfg.payload_bits()));
}

DecodeResult ldpc_decode(std::span<const double> channel_llrs, const CodeConfig& cfg) {
  const std::size_t n = cfg.coded_bits();
  if (channel_llrs.size() != n) {
    throw ContractError("ldpc_decode: expected " + std::to_string(n) + " LLRs, got " +
                        std::to_string(channel_llrs.size()));
  }
  check_llrs(channel_llrs);
  const auto& g = cfg.edges();
  const std::size_t m = g.row_start.size() - 1;
  const std::size_t n_edges = g.edge_var.size();
  const std::size_t pad_begin = cfg.payload_bits() + kCrcWidth;
  const std::size_t pad_end = cfg.info_bits();

  std::vector<double> input(channel_llrs.begin(), channel_llrs.end());
  for (std::size_t v = pad_begin; v < pad_end; ++v) input[v] = kInf;

  std::vector<double> c2v(n_edges, 0.0);
  std::vector<double> v2c(n_edges, 0.0);
  std::vector<double> t(n_edges, 0.0);
  std::vector<double> ext(n, 0.0);

  DecodeResult res;
  res.hard_bits.assign(n, 0);
  auto update_decisions = [&]() {
    for (std::size_t v = 0; v < n; ++v) {
      double s = 0.0;
      for (auto k = g.var_start[v]; k < g.var_start[v + 1]; ++k) s += c2v[g.var_edges[k]];
      ext[v] = s;
      res.hard_bits[v] = (input[v] + s) >= 0.0 ? 0 : 1;
    }
    for (std::size_t r = 0; r < m; ++r) {
      std::uint8_t acc = 0;
      for (auto e = g.row_start[r]; e < g.row_start[r + 1]; ++e) acc ^= res.hard_bits[g.edge_var[e]];
      if (acc) return false;
    }
    return true;
  };

  const int max_iter = std::max(cfg.bp_iterations(), 1);
  std::vector<double> prefix;
  for (int it = 1; it <= max_iter; ++it) {
    for (std::size_t v = 0; v < n; ++v) {
      const double in = std::clamp(input[v], -kMessageClip, kMessageClip);
      const double total = in + ext[v];
      for (auto k = g.var_start[v]; k < g.var_start[v + 1]; ++k) {
        const auto e = g.var_edges[k];
        v2c[e] = std::clamp(total - c2v[e], -kMessageClip, kMessageClip);
      }
    }
    for (std::size_t r = 0; r < m; ++r) {
      const auto b = g.row_start[r];
      const auto eend = g.row_start[r + 1];
      const std::size_t deg = eend - b;
      prefix.assign(deg + 1, 1.0);
      for (std::size_t i = 0; i < deg; ++i) {
        // tanh(x/2) = sign(x) (1 - e^-|x|) / (1 + e^-|x|)
        const double q = std::exp(-std::abs(v2c[b + i]));
        t[b + i] = std::copysign((1.0 - q) / (1.0 + q), v2c[b + i]);
        prefix[i + 1] = prefix[i] * t[b + i];
      }
      double suffix = 1.0;
      for (std::size_t i = deg; i-- > 0;) {
        const double p = std::clamp(prefix[i] * suffix, -kTanhClip, kTanhClip);
        c2v[b + i] = std::log((1.0 + p) / (1.0 - p));  // 2 atanh(p)
        suffix *= t[b + i];
      }
    }
    res.iterations = it;
    if (update_decisions()) {
      res.syndrome_ok = true;
      break;
    }
  }

  res.extrinsic_llrs.resize(n);
  res.posterior_llrs.resize(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (v >= pad_begin && v < pad_end) {
      res.extrinsic_llrs[v] = kInf;
      res.posterior_llrs[v] = kInf;
    } else {
      res.extrinsic_llrs[v] = ext[v];
      res.posterior_llrs[v] = channel_llrs[v] + ext[v];
    }
  }
  res.crc_ok = crc_check(std::span<const std::uint8_t>(res.hard_bits).first(pad_begin));
  return res;
}

Bits rate_match(std::span<const std::uint8_t> codeword, std::size_t e) {
  if (codeword.empty()) throw ContractError("rate_match: empty codeword");
  Bits out(e);
  for (std::size_t i = 0; i < e; ++i) out[i] = codeword[i % codeword.size()];
  return out;
}

LlrVector rate_recover(std::span<const double> llrs, std::size_t n) {
  if (n == 0) throw ContractError("rate_recover: zero code length");
  LlrVector out(n, 0.0);
  for (std::size_t i = 0; i < llrs.size(); ++i) out[i % n] += llrs[i];
  return out;
}

LlrVector rate_feedback(std::span<const double> decoder_extrinsic, std::span<const double> combined,
                        std::span<const double> llrs) {
  const std::size_t n = decoder_extrinsic.size();
  if (combined.size() != n || n == 0) throw ContractError("rate_feedback: length mismatch");
  LlrVector out(llrs.size());
  for (std::size_t i = 0; i < llrs.size(); ++i) {
    const std::size_t c = i % n;
    out[i] = decoder_extrinsic[c] + (combined[c] - llrs[i]);
  }
  return out;
}

}  // namespace noma
