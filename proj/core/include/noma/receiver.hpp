#pragma once

// Outer-loop controller: alternates detector and channel decoder calls under
// one of four interference-cancellation strategies.
//
// One outer iteration (OL) is one detect -> decode -> feedback round; for the
// SIC strategies it is one full ordered pass over the still undecoded UEs.
// OL 0 is the first round, which runs without any feedback.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "noma/channel.hpp"
#include "noma/coding.hpp"
#include "noma/detectors.hpp"
#include "noma/transmitter.hpp"

namespace noma {

enum class IcStrategy { hard_sic, enhanced_sic, soft_pic, hybrid_pic };

std::string to_string(IcStrategy s);
IcStrategy parse_ic_strategy(const std::string& text);

struct OuterLoopConfig {
  IcStrategy strategy = IcStrategy::hybrid_pic;
  int max_outer_iterations = 3;
  DetectorKind detector = DetectorKind::epa;
  // Zero selects the detector's default (EPA 3, MPA 5, others 1).
  int inner_iterations = 0;
  double epa_damping = kDefaultEpaDamping;
  std::size_t mpa_degree_cap = kDefaultMpaDegreeCap;
};

struct UserDecodeState {
  bool crc_passed = false;
  Bits decoded_bits;        // payload, valid iff crc_passed
  LlrVector feedback_llrs;  // decoder extrinsic from the latest decode, per transmitted bit
  double est_sinr = 0.0;
  bool hard_cancelled = false;
};

// Receiver state after one outer iteration.
struct OuterLoopSnapshot {
  std::vector<bool> crc_passed;
  // Payload hard decision per UE: the CRC-passed payload when there is one,
  // otherwise the latest decoder output.
  std::vector<Bits> payload_decisions;
  std::uint64_t op_count = 0;  // detector operations so far
};

struct ReceiverResult {
  std::vector<UserDecodeState> users;
  // One entry per outer iteration actually run; the loop stops early once
  // every UE passed its CRC.
  std::vector<OuterLoopSnapshot> snapshots;
  // Decode attempts in the order they happened (SIC strategies only).
  std::vector<std::size_t> decode_order;
  std::uint64_t op_count = 0;
  std::size_t detector_calls = 0;
  std::size_t decoder_calls = 0;
};

// Mean over occupied REs of p|g|^2 / (sum_{others} p'|g^H g'|^2 / |g|^2 + sigma^2)
// with g the channel column over antennas; `excluded` layers (cancelled) do
// not interfere. Excluded layers still get their own value.
std::vector<double> estimate_sinr(const ReceivedGrid& grid, const SchemeLayout& layout,
                                  const std::vector<bool>& excluded = {});

// Every UE uses `code`; each UE's codeword is rate matched to the coded bits
// its layout carries (see rate_match).
ReceiverResult run_receiver(const ReceivedGrid& grid, const SchemeLayout& layout,
                            const OuterLoopConfig& cfg, const CodeConfig& code);

// Transmitted grid row of a UE rebuilt from its payload.
std::vector<cplx> reconstruct_layer(std::size_t layer, std::span<const std::uint8_t> payload,
                                    const SchemeLayout& layout, const CodeConfig& code);

}  // namespace noma
