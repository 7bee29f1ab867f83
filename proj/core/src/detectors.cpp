#include "noma/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace noma {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRegularization = 1e-10;

using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

// One (layer, block, footprint position) to RE connection of the factor graph.
struct Edge {
  std::uint32_t layer;
  std::uint32_t vn;
  std::uint32_t pos;
  std::uint32_t re;
};

// Factor graph of the active layers plus their symbol priors.
struct Graph {
  const DetectorInput& in;
  const SchemeLayout& layout;
  const ReceivedGrid& grid;
  std::size_t n_rx;
  double noise_var;
  std::vector<std::size_t> active;
  std::vector<Edge> edges;                  // grouped by RE
  std::vector<std::uint32_t> re_start;      // n_re + 1
  std::vector<std::uint32_t> vn_layer;      // per VN
  std::vector<std::uint32_t> vn_block;
  std::vector<std::uint32_t> vn_edge_start; // per VN + 1, edges ordered by position
  std::vector<std::uint32_t> vn_edges;
  std::vector<std::vector<double>> log_prior;  // per VN, per symbol
  std::vector<LlrVector> prior_llrs;           // per layer, zero-filled when uniform

  explicit Graph(const DetectorInput& input);

  const Alphabet& alphabet(std::size_t vn) const { return *layout.alphabets[vn_layer[vn]]; }
  std::size_t n_vn() const { return vn_layer.size(); }
};

Graph::Graph(const DetectorInput& input)
    : in(input), layout(input.layout), grid(input.grid), n_rx(input.grid.n_rx),
      noise_var(std::max(input.grid.noise_var, 1e-300)) {
  const std::size_t J = layout.n_layers;
  if (grid.n_re != layout.n_re || grid.power.size() != J || grid.channel.n_layers != J ||
      grid.y.size() != grid.n_re * grid.n_rx) {
    throw ContractError("detector: received grid does not match the layout");
  }
  if (!in.prior_llrs.empty() && in.prior_llrs.size() != J) {
    throw ContractError("detector: prior LLRs must be given for every layer or none");
  }
  if (!in.cancelled.empty() && in.cancelled.size() != J) {
    throw ContractError("detector: cancellation flags must cover every layer");
  }
  prior_llrs.resize(J);
  for (std::size_t j = 0; j < J; ++j) {
    if (!in.cancelled.empty() && in.cancelled[j]) continue;
    active.push_back(j);
    const std::size_t nbits = layout.coded_bits(j);
    if (in.prior_llrs.empty() || in.prior_llrs[j].empty()) {
      prior_llrs[j].assign(nbits, 0.0);
    } else {
      if (in.prior_llrs[j].size() != nbits) {
        throw ContractError("detector: layer " + std::to_string(j) + " prior has " +
                            std::to_string(in.prior_llrs[j].size()) + " LLRs, expected " +
                            std::to_string(nbits));
      }
      check_llrs(in.prior_llrs[j]);
      prior_llrs[j] = in.prior_llrs[j];
    }
  }

  const std::size_t nb = layout.n_blocks();
  std::vector<Edge> raw;
  vn_edge_start.push_back(0);
  for (auto j : active) {
    const auto& a = *layout.alphabets[j];
    const std::size_t bps = a.bits_per_symbol();
    for (std::size_t b = 0; b < nb; ++b) {
      const auto vn = static_cast<std::uint32_t>(vn_layer.size());
      vn_layer.push_back(static_cast<std::uint32_t>(j));
      vn_block.push_back(static_cast<std::uint32_t>(b));
      std::vector<double> lp(a.size());
      llr_to_log_prior(std::span<const double>(prior_llrs[j]).subspan(b * bps, bps), lp);
      log_prior.push_back(std::move(lp));
      const auto& fp = layout.footprints[j][b];
      for (std::size_t t = 0; t < fp.size(); ++t) {
        raw.push_back({static_cast<std::uint32_t>(j), vn, static_cast<std::uint32_t>(t),
                       static_cast<std::uint32_t>(fp[t])});
      }
      vn_edge_start.push_back(static_cast<std::uint32_t>(raw.size()));
    }
  }
  // Stable sort by RE keeps layer order inside each function node.
  std::vector<std::uint32_t> order(raw.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return raw[a].re < raw[b].re; });
  std::vector<std::uint32_t> new_index(raw.size());
  edges.reserve(raw.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) {
    new_index[order[i]] = i;
    edges.push_back(raw[order[i]]);
  }
  vn_edges.resize(raw.size());
  for (std::uint32_t i = 0; i < raw.size(); ++i) vn_edges[i] = new_index[i];
  re_start.assign(layout.n_re + 1, 0);
  for (const auto& e : edges) ++re_start[e.re + 1];
  for (std::size_t k = 0; k < layout.n_re; ++k) re_start[k + 1] += re_start[k];
}

DetectorOutput make_output(const Graph& g) {
  DetectorOutput out;
  out.extrinsic_llrs.resize(g.layout.n_layers);
  out.posterior_llrs.resize(g.layout.n_layers);
  for (auto j : g.active) {
    out.extrinsic_llrs[j].assign(g.layout.coded_bits(j), 0.0);
    out.posterior_llrs[j].assign(g.layout.coded_bits(j), 0.0);
  }
  return out;
}

// Bit LLRs of one VN from per-symbol log-likelihoods (prior excluded).
void emit_bits(const Graph& g, std::size_t vn, std::span<const double> loglik, DetectorOutput& out) {
  const std::size_t j = g.vn_layer[vn];
  const std::size_t bps = g.alphabet(vn).bits_per_symbol();
  const std::size_t off = g.vn_block[vn] * bps;
  symbol_to_bit_llrs(loglik, std::span<const double>(g.prior_llrs[j]).subspan(off, bps),
                     std::span<double>(out.extrinsic_llrs[j]).subspan(off, bps),
                     std::span<double>(out.posterior_llrs[j]).subspan(off, bps));
}

std::vector<double> probs_from_log(std::span<const double> logp) {
  std::vector<double> p(logp.begin(), logp.end());
  normalize_log_probs(p);
  for (auto& v : p) v = std::exp(v);
  return p;
}

// Hermitian positive (semi)definite solver with the documented fallback:
// ill-conditioned matrices get 1e-10 * trace / dim added to the diagonal.
class HermitianSolver {
 public:
  void factor(Matrix& cov) {
    const auto dim = cov.rows();
    llt_.compute(cov);
    if (!well_conditioned()) {
      const double bump = kRegularization * std::max(cov.trace().real(), 1e-300) / static_cast<double>(dim);
      cov.diagonal().array() += bump;
      llt_.compute(cov);
    }
  }
  void solve_in_place(Vector& v) const { llt_.solveInPlace(v); }

 private:
  bool well_conditioned() const {
    if (llt_.info() != Eigen::Success) return false;
    const auto d = llt_.matrixLLT().diagonal().real();
    const double lo = d.minCoeff();
    const double hi = d.maxCoeff();
    return lo > 0.0 && lo * lo > 1e-14 * hi * hi;
  }

  Eigen::LLT<Matrix> llt_;
};

void check_iterations(int iters) {
  if (iters < 1) throw ContractError("detector: inner_iterations must be at least 1");
}

}  // namespace

ComplexityGuardError::ComplexityGuardError(std::size_t re, std::size_t degree, std::size_t cap)
    : std::runtime_error("MPA complexity guard: RE " + std::to_string(re) + " has " +
                         std::to_string(degree) + " colliding layers, cap is " + std::to_string(cap)),
      re_(re) {}

std::string to_string(DetectorKind kind) {
  switch (kind) {
    case DetectorKind::mpa: return "mpa";
    case DetectorKind::epa: return "epa";
    case DetectorKind::ese: return "ese";
    case DetectorKind::mmse_chip: return "mmse";
    case DetectorKind::mmse_block: return "mmse_block";
    case DetectorKind::brute_force: return "brute_force";
  }
  return "unknown";
}

DetectorKind parse_detector_kind(const std::string& text) {
  if (text == "mpa") return DetectorKind::mpa;
  if (text == "epa") return DetectorKind::epa;
  if (text == "ese") return DetectorKind::ese;
  if (text == "mmse" || text == "mmse_chip") return DetectorKind::mmse_chip;
  if (text == "mmse_block") return DetectorKind::mmse_block;
  if (text == "brute_force") return DetectorKind::brute_force;
  throw ConfigError("unknown detector '" + text + "' (expected mpa, epa, ese, mmse, mmse_block)");
}

// ---------------------------------------------------------------------------
// MPA

DetectorOutput mpa_detect(const DetectorInput& input) {
  check_iterations(input.inner_iterations);
  Graph g(input);
  auto out = make_output(g);
  const auto& layout = g.layout;
  const std::size_t n_edges = g.edges.size();

  for (std::size_t k = 0; k < layout.n_re; ++k) {
    const std::size_t deg = g.re_start[k + 1] - g.re_start[k];
    if (deg > input.mpa_degree_cap) throw ComplexityGuardError(k, deg, input.mpa_degree_cap);
  }

  // Messages live on projected points; offsets per edge.
  std::vector<std::size_t> msg_off(n_edges + 1, 0);
  for (std::size_t e = 0; e < n_edges; ++e) {
    const auto& ed = g.edges[e];
    msg_off[e + 1] = msg_off[e] + layout.projections[ed.layer][ed.pos].points.size();
  }
  std::vector<double> vn2fn(msg_off.back(), 0.0);
  std::vector<double> fn2vn(msg_off.back(), 0.0);

  auto proj = [&](std::size_t e) -> const Projection& {
    return layout.projections[g.edges[e].layer][g.edges[e].pos];
  };

  // VN -> FN: marginalize prior times the other incoming messages onto the
  // projection of this edge.
  std::vector<double> sym;
  auto vn_update = [&](std::size_t vn, bool include_fn) {
    const auto& a = g.alphabet(vn);
    const auto eb = g.vn_edge_start[vn];
    const auto ee = g.vn_edge_start[vn + 1];
    for (auto k = eb; k < ee; ++k) {
      const auto e = g.vn_edges[k];
      const auto& p = proj(e);
      double* msg = vn2fn.data() + msg_off[e];
      std::fill(msg, msg + p.points.size(), -kInf);
      for (std::size_t i = 0; i < a.size(); ++i) {
        double v = g.log_prior[vn][i];
        if (include_fn) {
          for (auto k2 = eb; k2 < ee; ++k2) {
            if (k2 == k) continue;
            const auto e2 = g.vn_edges[k2];
            v += fn2vn[msg_off[e2] + proj(e2).index[i]];
          }
        }
        msg[p.index[i]] = log_add(msg[p.index[i]], v);
      }
      std::span<double> s(msg, p.points.size());
      normalize_log_probs(s);
    }
  };

  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) vn_update(vn, false);

  std::vector<double> ll;
  std::vector<std::size_t> radix, digit;
  std::vector<cplx> contrib;  // per edge, point, antenna
  std::vector<std::size_t> contrib_off;
  std::vector<double> q, acc, peak, prefix, suffix;
  std::vector<cplx> resid(g.n_rx);

  for (int it = 0; it < input.inner_iterations; ++it) {
    for (std::size_t k = 0; k < layout.n_re; ++k) {
      const auto e0 = g.re_start[k];
      const std::size_t deg = g.re_start[k + 1] - e0;
      if (deg == 0) continue;
      radix.assign(deg, 0);
      contrib_off.assign(deg + 1, 0);
      std::size_t combos = 1;
      for (std::size_t d = 0; d < deg; ++d) {
        radix[d] = proj(e0 + d).points.size();
        combos *= radix[d];
        contrib_off[d + 1] = contrib_off[d] + radix[d] * g.n_rx;
      }
      contrib.resize(contrib_off[deg]);
      for (std::size_t d = 0; d < deg; ++d) {
        const auto& ed = g.edges[e0 + d];
        const auto& pts = proj(e0 + d).points;
        for (std::size_t p = 0; p < pts.size(); ++p) {
          for (std::size_t r = 0; r < g.n_rx; ++r) {
            contrib[contrib_off[d] + p * g.n_rx + r] = g.grid.gain(ed.layer, k, r) * pts[p];
          }
        }
      }
      out.op_count += combos;

      // Pass 1: log-likelihood of every joint hypothesis.
      ll.resize(combos);
      digit.assign(deg, 0);
      for (std::size_t c = 0; c < combos; ++c) {
        for (std::size_t r = 0; r < g.n_rx; ++r) resid[r] = g.grid.y_at(k, r);
        for (std::size_t d = 0; d < deg; ++d) {
          const cplx* cd = contrib.data() + contrib_off[d] + digit[d] * g.n_rx;
          for (std::size_t r = 0; r < g.n_rx; ++r) resid[r] -= cd[r];
        }
        double dist = 0.0;
        for (std::size_t r = 0; r < g.n_rx; ++r) dist += std::norm(resid[r]);
        ll[c] = -dist / g.noise_var;
        for (std::size_t d = deg; d-- > 0;) {
          if (++digit[d] < radix[d]) break;
          digit[d] = 0;
        }
      }

      // Pass 2: for every edge and point, the log-sum over hypotheses of the
      // likelihood times the other edges' messages, taken max-first so that
      // arbitrarily confident messages neither underflow nor saturate.
      std::vector<std::size_t> qoff(deg + 1, 0);
      for (std::size_t d = 0; d < deg; ++d) qoff[d + 1] = qoff[d] + radix[d];
      q.resize(qoff[deg]);
      for (std::size_t d = 0; d < deg; ++d) {
        for (std::size_t p = 0; p < radix[d]; ++p) q[qoff[d] + p] = vn2fn[msg_off[e0 + d] + p];
      }
      prefix.resize(deg + 1);
      suffix.resize(deg + 1);
      auto for_each_term = [&](auto&& f) {
        digit.assign(deg, 0);
        for (std::size_t c = 0; c < combos; ++c) {
          prefix[0] = ll[c];
          for (std::size_t d = 0; d < deg; ++d) prefix[d + 1] = prefix[d] + q[qoff[d] + digit[d]];
          suffix[deg] = 0.0;
          for (std::size_t d = deg; d-- > 0;) suffix[d] = suffix[d + 1] + q[qoff[d] + digit[d]];
          for (std::size_t d = 0; d < deg; ++d) f(qoff[d] + digit[d], prefix[d] + suffix[d + 1]);
          for (std::size_t d = deg; d-- > 0;) {
            if (++digit[d] < radix[d]) break;
            digit[d] = 0;
          }
        }
      };
      peak.assign(q.size(), -kInf);
      for_each_term([&](std::size_t i, double t) { peak[i] = std::max(peak[i], t); });
      acc.assign(q.size(), 0.0);
      for_each_term([&](std::size_t i, double t) {
        if (t > -kInf) acc[i] += std::exp(t - peak[i]);
      });
      for (std::size_t d = 0; d < deg; ++d) {
        std::span<double> s(fn2vn.data() + msg_off[e0 + d], radix[d]);
        for (std::size_t p = 0; p < radix[d]; ++p) {
          const auto i = qoff[d] + p;
          s[p] = peak[i] == -kInf ? -kInf : peak[i] + std::log(acc[i]);
        }
        normalize_log_probs(s);
      }
    }
    if (it + 1 < input.inner_iterations) {
      for (std::size_t vn = 0; vn < g.n_vn(); ++vn) vn_update(vn, true);
    }
  }

  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
    const auto& a = g.alphabet(vn);
    sym.assign(a.size(), 0.0);
    for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
      const auto e = g.vn_edges[k];
      for (std::size_t i = 0; i < a.size(); ++i) sym[i] += fn2vn[msg_off[e] + proj(e).index[i]];
    }
    emit_bits(g, vn, sym, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// EPA

DetectorOutput epa_detect(const DetectorInput& input, EpaTrace* trace) {
  check_iterations(input.inner_iterations);
  Graph g(input);
  auto out = make_output(g);
  const auto& layout = g.layout;
  const std::size_t n_edges = g.edges.size();
  const std::size_t nr = g.n_rx;
  const double rho = input.epa_damping;
  if (trace) {
    trace->posterior_mean.assign(layout.n_layers, std::vector<cplx>(layout.n_re, cplx{}));
  }
  if (g.active.empty()) return out;

  std::vector<GaussianMessage> vn2fn(n_edges);
  std::vector<GaussianMessage> fn2vn(n_edges);  // uninformative until first FN update
  std::vector<std::vector<double>> probs(g.n_vn());
  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
    probs[vn] = probs_from_log(g.log_prior[vn]);
    for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
      const auto e = g.vn_edges[k];
      vn2fn[e] = moment_match(probs[vn], g.alphabet(vn), g.edges[e].pos);
    }
  }

  Matrix cov(nr, nr);
  Vector resid(nr), tmp(nr);
  Matrix gains;
  HermitianSolver solver;
  std::vector<double> post;

  auto posterior_log = [&](std::size_t vn, std::vector<double>& lp, bool with_prior) {
    const auto& a = g.alphabet(vn);
    lp.assign(a.size(), 0.0);
    for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
      const auto e = g.vn_edges[k];
      const auto& msg = fn2vn[e];
      if (msg.is_uninformative()) continue;
      for (std::size_t i = 0; i < a.size(); ++i) {
        lp[i] -= std::norm(a.at(i, g.edges[e].pos) - msg.mean) / msg.variance;
      }
    }
    if (with_prior) {
      for (std::size_t i = 0; i < a.size(); ++i) lp[i] += g.log_prior[vn][i];
    }
    out.op_count += a.size() * a.block_len();
  };

  for (int it = 0; it < input.inner_iterations; ++it) {
    // Function nodes: per-RE LMMSE posterior, then extrinsic by division.
    for (std::size_t k = 0; k < layout.n_re; ++k) {
      const auto e0 = g.re_start[k];
      const std::size_t deg = g.re_start[k + 1] - e0;
      if (deg == 0) continue;
      gains.resize(nr, static_cast<Eigen::Index>(deg));
      cov.setZero();
      cov.diagonal().setConstant(g.noise_var);
      for (std::size_t r = 0; r < nr; ++r) resid(r) = g.grid.y_at(k, r);
      for (std::size_t d = 0; d < deg; ++d) {
        const auto& ed = g.edges[e0 + d];
        for (std::size_t r = 0; r < nr; ++r) gains(r, d) = g.grid.gain(ed.layer, k, r);
        const auto& m = vn2fn[e0 + d];
        cov.noalias() += m.variance * gains.col(d) * gains.col(d).adjoint();
        resid -= m.mean * gains.col(d);
      }
      solver.factor(cov);
      Vector w = resid;
      solver.solve_in_place(w);  // G^-1 (y - sum m g)
      for (std::size_t d = 0; d < deg; ++d) {
        const auto e = e0 + d;
        const auto& m = vn2fn[e];
        tmp = gains.col(d);
        solver.solve_in_place(tmp);
        const double a = std::real(gains.col(d).dot(tmp));   // g^H G^-1 g
        const cplx b = gains.col(d).dot(w);                  // g^H G^-1 r
        const GaussianMessage posterior{m.mean + m.variance * b,
                                        m.variance - m.variance * m.variance * a};
        if (posterior.variance > 0.0) {
          fn2vn[e] = gaussian_divide(posterior, m, fn2vn[e]);
        }
      }
      out.op_count += 2 * deg * nr * nr + nr * nr * nr;
    }

    const bool last = it + 1 == input.inner_iterations;
    if (last) break;

    // Variable nodes: discrete posterior, moment matching, division, damping.
    for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
      posterior_log(vn, post, true);
      normalize_log_probs(post);
      for (auto& v : post) v = std::exp(v);
      const auto& a = g.alphabet(vn);
      out.op_count += a.size() * a.block_len();
      for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
        const auto e = g.vn_edges[k];
        const auto matched = moment_match(post, a, g.edges[e].pos);
        const auto fresh = try_gaussian_divide(matched, fn2vn[e]);
        if (!fresh) continue;  // keep the previous message on this edge
        const auto& old = vn2fn[e];
        const double lam = rho * fresh->precision() + (1.0 - rho) * old.precision();
        const cplx eta = rho * fresh->mean * fresh->precision() + (1.0 - rho) * old.mean * old.precision();
        if (lam > 0.0) vn2fn[e] = {eta / lam, 1.0 / lam};
      }
    }
  }

  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
    posterior_log(vn, post, false);
    emit_bits(g, vn, post, out);
    if (trace) {
      for (std::size_t i = 0; i < post.size(); ++i) post[i] += g.log_prior[vn][i];
      normalize_log_probs(post);
      for (auto& v : post) v = std::exp(v);
      const auto& a = g.alphabet(vn);
      const auto& fp = layout.footprints[g.vn_layer[vn]][g.vn_block[vn]];
      for (std::size_t t = 0; t < fp.size(); ++t) {
        cplx mean{};
        for (std::size_t i = 0; i < a.size(); ++i) mean += post[i] * a.at(i, t);
        trace->posterior_mean[g.vn_layer[vn]][fp[t]] = mean;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ESE

DetectorOutput ese_detect(const DetectorInput& input) {
  Graph g(input);
  auto out = make_output(g);
  const auto& layout = g.layout;
  const std::size_t nr = g.n_rx;
  const std::size_t n_edges = g.edges.size();

  std::vector<GaussianMessage> soft(n_edges);
  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
    const auto p = probs_from_log(g.log_prior[vn]);
    for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
      const auto e = g.vn_edges[k];
      soft[e] = moment_match(p, g.alphabet(vn), g.edges[e].pos);
    }
  }

  std::vector<GaussianMessage> ext(n_edges);
  std::vector<cplx> gains;
  std::vector<cplx> cross;
  for (std::size_t k = 0; k < layout.n_re; ++k) {
    const auto e0 = g.re_start[k];
    const std::size_t deg = g.re_start[k + 1] - e0;
    if (deg == 0) continue;
    gains.resize(deg * nr);
    for (std::size_t d = 0; d < deg; ++d) {
      for (std::size_t r = 0; r < nr; ++r) gains[d * nr + r] = g.grid.gain(g.edges[e0 + d].layer, k, r);
    }
    cross.resize(deg);
    for (std::size_t d = 0; d < deg; ++d) {
      const cplx* gd = &gains[d * nr];
      double norm2 = 0.0;
      cplx z{};
      for (std::size_t r = 0; r < nr; ++r) {
        norm2 += std::norm(gd[r]);
        z += std::conj(gd[r]) * g.grid.y_at(k, r);
      }
      cplx interference{};
      double variance = g.noise_var * norm2;
      for (std::size_t d2 = 0; d2 < deg; ++d2) {
        if (d2 == d) continue;
        cplx c{};
        for (std::size_t r = 0; r < nr; ++r) c += std::conj(gd[r]) * gains[d2 * nr + r];
        interference += c * soft[e0 + d2].mean;
        variance += soft[e0 + d2].variance * std::norm(c);
      }
      out.op_count += deg * nr;
      if (norm2 <= 0.0) continue;  // no energy on this RE: stays uninformative
      ext[e0 + d] = {(z - interference) / norm2, variance / (norm2 * norm2)};
    }
  }

  std::vector<double> ll;
  for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
    const auto& a = g.alphabet(vn);
    ll.assign(a.size(), 0.0);
    for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
      const auto e = g.vn_edges[k];
      if (ext[e].is_uninformative()) continue;
      for (std::size_t i = 0; i < a.size(); ++i) {
        ll[i] -= std::norm(a.at(i, g.edges[e].pos) - ext[e].mean) / ext[e].variance;
      }
    }
    emit_bits(g, vn, ll, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// MMSE with soft parallel interference cancellation

namespace {

// Filters one stacked observation: columns are effective signatures, priors
// give their means and variances. Writes the extrinsic Gaussian per column.
void lmmse_extrinsic(const Matrix& cols, const Vector& y, std::span<const GaussianMessage> prior,
                     double noise_var, HermitianSolver& solver, std::span<GaussianMessage> result,
                     DetectorOutput& out) {
  const auto dim = cols.rows();
  const auto n = cols.cols();
  Matrix cov = Matrix::Identity(dim, dim) * noise_var;
  Vector resid = y;
  for (Eigen::Index c = 0; c < n; ++c) {
    cov.noalias() += prior[c].variance * cols.col(c) * cols.col(c).adjoint();
    resid -= prior[c].mean * cols.col(c);
  }
  solver.factor(cov);
  const auto d3 = static_cast<std::uint64_t>(dim) * dim * dim;
  out.inversion_ops += d3;
  out.op_count += d3;
  Vector f(dim);
  for (Eigen::Index c = 0; c < n; ++c) {
    // w = v G^-1 g, mu = w^H g, zhat = w^H (y - sum_{others} m g); the
    // normalized output zhat / mu has variance w^H (G - v g g^H) w / mu^2,
    // which reduces to 1/a - v with a = g^H G^-1 g.
    f = cols.col(c);
    solver.solve_in_place(f);
    const double a = std::real(cols.col(c).dot(f));
    out.op_count += static_cast<std::uint64_t>(dim) * dim;
    if (!(a > 0.0)) continue;
    const cplx zhat = f.dot(resid + prior[c].mean * cols.col(c));
    const double v = std::max(1.0 / a - prior[c].variance, kMinVariance);
    result[c] = {zhat / a, v};
  }
}

}  // namespace

DetectorOutput mmse_detect(const DetectorInput& input, MmseMode mode) {
  Graph g(input);
  auto out = make_output(g);
  const auto& layout = g.layout;
  const std::size_t nr = g.n_rx;
  HermitianSolver solver;
  std::vector<double> ll;

  if (mode == MmseMode::chip) {
    const std::size_t n_edges = g.edges.size();
    std::vector<GaussianMessage> soft(n_edges), ext(n_edges);
    for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
      const auto p = probs_from_log(g.log_prior[vn]);
      for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
        const auto e = g.vn_edges[k];
        soft[e] = moment_match(p, g.alphabet(vn), g.edges[e].pos);
      }
    }
    Matrix cols;
    Vector y(nr);
    for (std::size_t k = 0; k < layout.n_re; ++k) {
      const auto e0 = g.re_start[k];
      const std::size_t deg = g.re_start[k + 1] - e0;
      if (deg == 0) continue;
      cols.resize(nr, static_cast<Eigen::Index>(deg));
      for (std::size_t d = 0; d < deg; ++d) {
        for (std::size_t r = 0; r < nr; ++r) cols(r, d) = g.grid.gain(g.edges[e0 + d].layer, k, r);
      }
      for (std::size_t r = 0; r < nr; ++r) y(r) = g.grid.y_at(k, r);
      lmmse_extrinsic(cols, y, std::span(soft).subspan(e0, deg), g.noise_var, solver,
                      std::span(ext).subspan(e0, deg), out);
    }
    for (std::size_t vn = 0; vn < g.n_vn(); ++vn) {
      const auto& a = g.alphabet(vn);
      ll.assign(a.size(), 0.0);
      for (auto k = g.vn_edge_start[vn]; k < g.vn_edge_start[vn + 1]; ++k) {
        const auto e = g.vn_edges[k];
        if (ext[e].is_uninformative()) continue;
        for (std::size_t i = 0; i < a.size(); ++i) {
          ll[i] -= std::norm(a.at(i, g.edges[e].pos) - ext[e].mean) / ext[e].variance;
        }
      }
      emit_bits(g, vn, ll, out);
    }
    return out;
  }

  if (!layout.is_spread()) {
    throw ConfigError("block-wise MMSE needs a linear spreading layout (cb_ofdma or nls)");
  }
  const std::size_t L = layout.block_size;
  const std::size_t dim = nr * L;
  const std::size_t nact = g.active.size();
  Matrix cols(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(nact));
  Vector y(static_cast<Eigen::Index>(dim));
  std::vector<GaussianMessage> soft(nact), ext(nact);
  const std::size_t nb = layout.n_blocks();
  for (std::size_t b = 0; b < nb; ++b) {
    cols.setZero();
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t r = 0; r < nr; ++r) y(t * nr + r) = g.grid.y_at(b * L + t, r);
    }
    for (std::size_t c = 0; c < nact; ++c) {
      const std::size_t vn = c * nb + b;
      const std::size_t j = g.vn_layer[vn];
      const auto& fp = layout.footprints[j][b];
      for (std::size_t t = 0; t < fp.size(); ++t) {
        const std::size_t row = fp[t] - b * L;
        for (std::size_t r = 0; r < nr; ++r) {
          cols(row * nr + r, c) = layout.spreading[j][t] * g.grid.gain(j, fp[t], r);
        }
      }
      // Moments of the unspread base symbol.
      const auto p = probs_from_log(g.log_prior[vn]);
      cplx mean{};
      double second = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        mean += p[i] * layout.base_points[j][i];
        second += p[i] * std::norm(layout.base_points[j][i]);
      }
      soft[c] = {mean, std::max(second - std::norm(mean), kMinVariance)};
      ext[c] = GaussianMessage::uninformative();
    }
    lmmse_extrinsic(cols, y, soft, g.noise_var, solver, ext, out);
    for (std::size_t c = 0; c < nact; ++c) {
      const std::size_t vn = c * nb + b;
      const auto& base = layout.base_points[g.vn_layer[vn]];
      ll.assign(base.size(), 0.0);
      if (!ext[c].is_uninformative()) {
        for (std::size_t i = 0; i < base.size(); ++i) {
          ll[i] = -std::norm(base[i] - ext[c].mean) / ext[c].variance;
        }
      }
      emit_bits(g, vn, ll, out);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exhaustive oracle

DetectorOutput brute_force_oracle(const DetectorInput& input) {
  Graph g(input);
  auto out = make_output(g);
  const auto& layout = g.layout;
  const std::size_t nv = g.n_vn();
  std::uint64_t total = 1;
  for (std::size_t vn = 0; vn < nv; ++vn) {
    total *= g.alphabet(vn).size();
    if (total > kBruteForceLimit) {
      throw ConfigError("brute-force oracle: joint alphabet exceeds 2^20 hypotheses");
    }
  }
  // acc[vn][i] = log sum over hypotheses with symbol i at vn of
  //              exp(loglik + sum of the other VNs' log priors)
  std::vector<std::vector<double>> acc(nv);
  for (std::size_t vn = 0; vn < nv; ++vn) acc[vn].assign(g.alphabet(vn).size(), -kInf);
  std::vector<std::size_t> sym(nv, 0);
  std::vector<cplx> tx(layout.n_layers * layout.n_re);
  for (std::uint64_t h = 0; h < total; ++h) {
    std::fill(tx.begin(), tx.end(), cplx{});
    double lp_all = 0.0;
    for (std::size_t vn = 0; vn < nv; ++vn) {
      const std::size_t j = g.vn_layer[vn];
      const auto& fp = layout.footprints[j][g.vn_block[vn]];
      for (std::size_t t = 0; t < fp.size(); ++t) tx[j * layout.n_re + fp[t]] = g.alphabet(vn).at(sym[vn], t);
      lp_all += g.log_prior[vn][sym[vn]];
    }
    double ll = 0.0;
    for (std::size_t k = 0; k < layout.n_re; ++k) {
      for (std::size_t r = 0; r < g.n_rx; ++r) {
        cplx s = g.grid.y_at(k, r);
        for (auto j : g.active) s -= g.grid.gain(j, k, r) * tx[j * layout.n_re + k];
        ll -= std::norm(s) / g.noise_var;
      }
    }
    out.op_count += layout.n_re;
    for (std::size_t vn = 0; vn < nv; ++vn) {
      double others = 0.0;
      for (std::size_t v2 = 0; v2 < nv; ++v2) {
        if (v2 != vn) others += g.log_prior[v2][sym[v2]];
      }
      (void)lp_all;
      acc[vn][sym[vn]] = log_add(acc[vn][sym[vn]], ll + others);
    }
    for (std::size_t vn = nv; vn-- > 0;) {
      if (++sym[vn] < g.alphabet(vn).size()) break;
      sym[vn] = 0;
    }
  }
  for (std::size_t vn = 0; vn < nv; ++vn) emit_bits(g, vn, acc[vn], out);
  return out;
}

DetectorOutput detect(DetectorKind kind, const DetectorInput& input) {
  switch (kind) {
    case DetectorKind::mpa: return mpa_detect(input);
    case DetectorKind::epa: return epa_detect(input);
    case DetectorKind::ese: return ese_detect(input);
    case DetectorKind::mmse_chip: return mmse_detect(input, MmseMode::chip);
    case DetectorKind::mmse_block: return mmse_detect(input, MmseMode::block);
    case DetectorKind::brute_force: return brute_force_oracle(input);
  }
  throw ConfigError("unsupported detector");
}

}  // namespace noma
