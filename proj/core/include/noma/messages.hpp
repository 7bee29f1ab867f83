#pragma once

// Gaussian and discrete message algebra shared by every detector.
//
// Bit labeling: symbol index i carries log2(M) bits, the first bit of a group
// is the most significant bit of i. QAM alphabets are built so that the index
// already is the Gray label, codebook alphabets use the natural index.

#include <cstddef>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "noma/types.hpp"

namespace noma {

// Variance floor applied by moment matching.
inline constexpr double kMinVariance = 1e-8;

struct GaussianMessage {
  cplx mean{0.0, 0.0};
  double variance = std::numeric_limits<double>::infinity();

  static GaussianMessage uninformative() { return {}; }
  bool is_uninformative() const { return variance == std::numeric_limits<double>::infinity(); }
  double precision() const { return is_uninformative() ? 0.0 : 1.0 / variance; }
};

// Normalized product of two Gaussian densities.
GaussianMessage gaussian_multiply(const GaussianMessage& a, const GaussianMessage& b);

// Quotient num / den, or nothing when the resulting variance is not positive.
std::optional<GaussianMessage> try_gaussian_divide(const GaussianMessage& num,
                                                   const GaussianMessage& den);

// Quotient num / den; a non-positive result variance keeps `previous` (the
// edge is simply not updated this round).
GaussianMessage gaussian_divide(const GaussianMessage& num, const GaussianMessage& den,
                                const GaussianMessage& previous);

// Symbol-block alphabet: M blocks, each spanning block_len occupied REs.
class Alphabet {
 public:
  Alphabet(std::size_t block_len, std::vector<cplx> points);

  std::size_t size() const { return size_; }
  std::size_t block_len() const { return block_len_; }
  std::size_t bits_per_symbol() const { return bits_; }
  cplx at(std::size_t symbol, std::size_t position) const {
    return points_[symbol * block_len_ + position];
  }
  std::span<const cplx> symbol(std::size_t i) const {
    return {points_.data() + i * block_len_, block_len_};
  }
  const std::vector<cplx>& points() const { return points_; }

  // Mean of |x|^2 over symbols and positions.
  double energy_per_position() const;

 private:
  std::size_t block_len_;
  std::size_t size_;
  std::size_t bits_;
  std::vector<cplx> points_;
};

using AlphabetPtr = std::shared_ptr<const Alphabet>;

inline int label_bit(std::size_t symbol, std::size_t bit, std::size_t bits_per_symbol) {
  return static_cast<int>((symbol >> (bits_per_symbol - 1 - bit)) & 1U);
}

struct DiscretePrior {
  AlphabetPtr alphabet;
  std::vector<double> probs;
};

// log P(bit = 0) and log P(bit = 1) for one LLR, exact for +-inf.
double log_prob_bit0(double llr);
double log_prob_bit1(double llr);

DiscretePrior llr_to_prior(std::span<const double> llrs, AlphabetPtr alphabet);

// Log-domain version: out[i] = log P(symbol i). `out` must hold 2^llrs.size() entries.
void llr_to_log_prior(std::span<const double> llrs, std::span<double> out);

// Bit marginals of a prior, as LLRs.
LlrVector prior_to_llrs(const DiscretePrior& prior);

GaussianMessage moment_match(const DiscretePrior& prior, std::size_t position);
GaussianMessage moment_match(std::span<const double> probs, const Alphabet& alphabet,
                             std::size_t position);

// Per-bit LLRs from per-symbol log-likelihoods and bit priors.
//   posterior[b] = log sum_{i:b=0} exp(loglik_i + log P(i)) - (same for b=1)
//   extrinsic[b] = same sums with the prior of bit b itself left out
// so posterior = prior + extrinsic mathematically, and extrinsic stays finite
// when a prior bit is certain.
void symbol_to_bit_llrs(std::span<const double> loglik, std::span<const double> prior_llrs,
                        std::span<double> extrinsic, std::span<double> posterior);

// log(exp(a) + exp(b)) without overflow; -inf is the neutral element.
double log_add(double a, double b);

// In-place normalization of log-probabilities so they sum to one; returns the
// subtracted log normalizer.
double normalize_log_probs(std::span<double> logp);

void check_llrs(std::span<const double> llrs);

}  // namespace noma
