#pragma once

// Multi-user detectors. Each one takes the received grid plus per-layer bit
// priors (decoder feedback) and returns extrinsic coded-bit LLRs.
//
// Operation counters, so numbers are comparable between detectors:
//   MPA   one unit per joint hypothesis enumerated at a function node, i.e.
//         prod_j m_p(j, k) per RE per inner iteration.
//   EPA   per RE and iteration 2*d*Nr^2 + Nr^3 (covariance, factorization,
//         solves); per block and VN update 2*M*d_v; final posterior M*d_v.
//   ESE   d*Nr per layer and RE.
//   MMSE  inversion_ops: dim^3 per factorized covariance (dim = Nr per RE in
//         chip mode, Nr*L per block in block mode); op_count adds dim^2 per
//         filtered layer on top.
//   Brute force: one unit per joint hypothesis and RE.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "noma/channel.hpp"
#include "noma/messages.hpp"
#include "noma/transmitter.hpp"

namespace noma {

inline constexpr int kDefaultEpaIterations = 3;
inline constexpr int kDefaultMpaIterations = 5;
inline constexpr double kDefaultEpaDamping = 0.5;
inline constexpr std::size_t kDefaultMpaDegreeCap = 8;
inline constexpr std::uint64_t kBruteForceLimit = std::uint64_t{1} << 20;

// MPA refuses REs with more colliding layers than the configured cap.
class ComplexityGuardError : public std::runtime_error {
 public:
  ComplexityGuardError(std::size_t re, std::size_t degree, std::size_t cap);
  std::size_t re() const { return re_; }

 private:
  std::size_t re_;
};

enum class DetectorKind { mpa, epa, ese, mmse_chip, mmse_block, brute_force };
enum class MmseMode { chip, block };

std::string to_string(DetectorKind kind);
DetectorKind parse_detector_kind(const std::string& text);

struct DetectorInput {
  const ReceivedGrid& grid;
  const SchemeLayout& layout;
  // Per layer, coded-bit prior LLRs; an empty vector means uniform.
  std::vector<LlrVector> prior_llrs;
  // Per layer; hard-cancelled layers take no part in detection. Empty = none.
  std::vector<bool> cancelled;
  int inner_iterations = 1;
  double epa_damping = kDefaultEpaDamping;
  std::size_t mpa_degree_cap = kDefaultMpaDegreeCap;
};

struct DetectorOutput {
  // Per layer over its coded bits; empty for cancelled layers.
  std::vector<LlrVector> extrinsic_llrs;
  // Posterior bit LLRs as computed internally: prior + extrinsic.
  std::vector<LlrVector> posterior_llrs;
  std::uint64_t op_count = 0;
  std::uint64_t inversion_ops = 0;
};

// Per-RE means of the final discrete posteriors, [layer][re] (0 off-footprint).
struct EpaTrace {
  std::vector<std::vector<cplx>> posterior_mean;
};

DetectorOutput mpa_detect(const DetectorInput& input);
DetectorOutput epa_detect(const DetectorInput& input, EpaTrace* trace = nullptr);
// Scalar matched-filter ESE; inner_iterations is ignored.
DetectorOutput ese_detect(const DetectorInput& input);
DetectorOutput mmse_detect(const DetectorInput& input, MmseMode mode);
// Exact bit LLRs by enumerating every joint hypothesis of all active layers
// and blocks; refuses above kBruteForceLimit hypotheses.
DetectorOutput brute_force_oracle(const DetectorInput& input);

DetectorOutput detect(DetectorKind kind, const DetectorInput& input);

}  // namespace noma
