#include "noma/messages.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <string>

namespace noma {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_power_of_two(std::size_t v) { return v >= 2 && (v & (v - 1)) == 0; }

}  // namespace

GaussianMessage gaussian_multiply(const GaussianMessage& a, const GaussianMessage& b) {
  const double prec = a.precision() + b.precision();
  if (prec == 0.0) return GaussianMessage::uninformative();
  const cplx eta = a.mean * a.precision() + b.mean * b.precision();
  return {eta / prec, 1.0 / prec};
}

std::optional<GaussianMessage> try_gaussian_divide(const GaussianMessage& num,
                                                   const GaussianMessage& den) {
  const double prec = num.precision() - den.precision();
  if (den.is_uninformative()) return num;
  if (!(prec > 0.0)) return std::nullopt;
  const cplx eta = num.mean * num.precision() - den.mean * den.precision();
  return GaussianMessage{eta / prec, 1.0 / prec};
}

GaussianMessage gaussian_divide(const GaussianMessage& num, const GaussianMessage& den,
                                const GaussianMessage& previous) {
  return try_gaussian_divide(num, den).value_or(previous);
}

Alphabet::Alphabet(std::size_t block_len, std::vector<cplx> points)
    : block_len_(block_len), points_(std::move(points)) {
  if (block_len_ == 0 || points_.size() % block_len_ != 0) {
    throw ContractError("alphabet: point count is not a multiple of the block length");
  }
  size_ = points_.size() / block_len_;
  if (!is_power_of_two(size_)) {
    throw ContractError("alphabet: size must be a power of two >= 2, got " +
                        std::to_string(size_));
  }
  bits_ = static_cast<std::size_t>(std::countr_zero(size_));
}

double Alphabet::energy_per_position() const {
  double e = 0.0;
  for (const auto& p : points_) e += std::norm(p);
  return e / static_cast<double>(points_.size());
}

double log_prob_bit0(double llr) {
  // log sigmoid(llr)
  if (llr >= 0.0) return -std::log1p(std::exp(-llr));
  return llr - std::log1p(std::exp(llr));
}

double log_prob_bit1(double llr) { return log_prob_bit0(-llr); }

void llr_to_log_prior(std::span<const double> llrs, std::span<double> out) {
  const std::size_t nb = llrs.size();
  if (out.size() != (std::size_t{1} << nb)) {
    throw ContractError("llr_to_prior: LLR segment length does not match log2(M)");
  }
  std::array<double, 16> lp0{};
  std::array<double, 16> lp1{};
  if (nb > lp0.size()) throw ContractError("llr_to_prior: too many bits per symbol");
  for (std::size_t b = 0; b < nb; ++b) {
    lp0[b] = log_prob_bit0(llrs[b]);
    lp1[b] = log_prob_bit1(llrs[b]);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t b = 0; b < nb; ++b) s += label_bit(i, b, nb) ? lp1[b] : lp0[b];
    out[i] = s;
  }
}

DiscretePrior llr_to_prior(std::span<const double> llrs, AlphabetPtr alphabet) {
  if (!alphabet) throw ContractError("llr_to_prior: null alphabet");
  if (llrs.size() != alphabet->bits_per_symbol()) {
    throw ContractError("llr_to_prior: expected " + std::to_string(alphabet->bits_per_symbol()) +
                        " LLRs, got " + std::to_string(llrs.size()));
  }
  check_llrs(llrs);
  std::vector<double> logp(alphabet->size());
  llr_to_log_prior(llrs, logp);
  double total = 0.0;
  for (auto& v : logp) {
    v = std::exp(v);
    total += v;
  }
  for (auto& v : logp) v /= total;
  return {std::move(alphabet), std::move(logp)};
}

LlrVector prior_to_llrs(const DiscretePrior& prior) {
  const std::size_t nb = prior.alphabet->bits_per_symbol();
  LlrVector out(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    double p0 = 0.0;
    double p1 = 0.0;
    for (std::size_t i = 0; i < prior.probs.size(); ++i) {
      (label_bit(i, b, nb) ? p1 : p0) += prior.probs[i];
    }
    out[b] = std::log(p0) - std::log(p1);
  }
  return out;
}

GaussianMessage moment_match(std::span<const double> probs, const Alphabet& alphabet,
                             std::size_t position) {
  cplx mean{0.0, 0.0};
  double second = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const cplx x = alphabet.at(i, position);
    mean += probs[i] * x;
    second += probs[i] * std::norm(x);
  }
  const double var = second - std::norm(mean);
  return {mean, std::max(var, kMinVariance)};
}

GaussianMessage moment_match(const DiscretePrior& prior, std::size_t position) {
  if (!prior.alphabet || position >= prior.alphabet->block_len() ||
      prior.probs.size() != prior.alphabet->size()) {
    throw ContractError("moment_match: prior and position are inconsistent");
  }
  return moment_match(prior.probs, *prior.alphabet, position);
}

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

double normalize_log_probs(std::span<double> logp) {
  double mx = -kInf;
  for (double v : logp) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : logp) s += std::exp(v - mx);
  const double lz = mx + std::log(s);
  for (double& v : logp) v -= lz;
  return lz;
}

void symbol_to_bit_llrs(std::span<const double> loglik, std::span<const double> prior_llrs,
                        std::span<double> extrinsic, std::span<double> posterior) {
  const std::size_t m = loglik.size();
  const std::size_t nb = prior_llrs.size();
  if (m != (std::size_t{1} << nb) || extrinsic.size() != nb || posterior.size() != nb) {
    throw ContractError("symbol_to_bit_llrs: inconsistent sizes");
  }
  std::array<double, 16> lp0{};
  std::array<double, 16> lp1{};
  for (std::size_t b = 0; b < nb; ++b) {
    lp0[b] = log_prob_bit0(prior_llrs[b]);
    lp1[b] = log_prob_bit1(prior_llrs[b]);
  }
  for (std::size_t b = 0; b < nb; ++b) {
    double ext0 = -kInf, ext1 = -kInf, post0 = -kInf, post1 = -kInf;
    for (std::size_t i = 0; i < m; ++i) {
      double others = 0.0;
      for (std::size_t c = 0; c < nb; ++c) {
        if (c != b) others += label_bit(i, c, nb) ? lp1[c] : lp0[c];
      }
      const double e = loglik[i] + others;
      if (label_bit(i, b, nb)) {
        ext1 = log_add(ext1, e);
        post1 = log_add(post1, e + lp1[b]);
      } else {
        ext0 = log_add(ext0, e);
        post0 = log_add(post0, e + lp0[b]);
      }
    }
    extrinsic[b] = ext0 - ext1;
    if (post0 == -kInf && post1 == -kInf) {
      posterior[b] = 0.0;
    } else {
      posterior[b] = post0 - post1;
    }
  }
}

void check_llrs(std::span<const double> llrs) {
  for (double v : llrs) {
    if (std::isnan(v)) throw ContractError("LLR vector contains NaN");
  }
}

}  // namespace noma
