#pragma once

// CRC-16 attachment and a soft-in/soft-out LDPC channel decoder.
//
// Transport block layout inside the systematic part of a codeword:
//   [ payload (payload_bits) | CRC-16 (crc_width) | zero padding ]
// The padding is known to the decoder and enters it with an infinite LLR.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "noma/types.hpp"

namespace noma {

inline constexpr std::uint64_t kDefaultCodeSeed = 20180416;
inline constexpr int kDefaultBpIterations = 25;
inline constexpr std::size_t kCrcWidth = 16;

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no xorout.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> bits);
Bits crc_attach(std::span<const std::uint8_t> payload);
bool crc_check(std::span<const std::uint8_t> bits_with_crc);

struct SparseBinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  // Column indices of the ones in each row, ascending.
  std::vector<std::vector<std::uint32_t>> row_entries;

  std::vector<std::vector<std::uint32_t>> column_entries() const;
  // Rank over GF(2).
  std::size_t rank() const;
  Bits multiply(std::span<const std::uint8_t> v) const;
};

// Sparse text format used by MacKay's tools: dimensions, max weights, weight
// lists, then 1-based column lists per column and row lists per row.
std::string to_alist(const SparseBinaryMatrix& h);
SparseBinaryMatrix from_alist(const std::string& text);

// A systematic binary LDPC code together with its transport-block format.
class CodeConfig {
 public:
  // `parity_check` must have full row rank and its last `rows` columns (the
  // parity positions) must form an invertible block.
  CodeConfig(SparseBinaryMatrix parity_check, std::size_t payload_bits,
             int bp_iterations = kDefaultBpIterations);

  std::size_t info_bits() const { return info_bits_; }
  std::size_t coded_bits() const { return coded_bits_; }
  std::size_t payload_bits() const { return payload_bits_; }
  std::size_t crc_width() const { return kCrcWidth; }
  std::size_t padding_bits() const { return info_bits_ - payload_bits_ - kCrcWidth; }
  int bp_iterations() const { return bp_iterations_; }
  void set_bp_iterations(int n) { bp_iterations_ = n; }
  double rate() const { return static_cast<double>(info_bits_) / static_cast<double>(coded_bits_); }
  const SparseBinaryMatrix& parity_check() const { return h_; }

  // Dense rows of the map info -> parity, packed 64 bits per word.
  const std::vector<std::vector<std::uint64_t>>& parity_generator() const { return generator_; }

  struct Edges {
    std::vector<std::uint32_t> row_start;  // rows + 1 offsets into edge_var
    std::vector<std::uint32_t> edge_var;   // variable index of each edge, grouped by row
    std::vector<std::uint32_t> var_start;  // cols + 1 offsets into var_edges
    std::vector<std::uint32_t> var_edges;  // edge ids grouped by variable
  };
  const Edges& edges() const { return edges_; }

 private:
  SparseBinaryMatrix h_;
  std::size_t info_bits_;
  std::size_t coded_bits_;
  std::size_t payload_bits_;
  int bp_iterations_;
  std::vector<std::vector<std::uint64_t>> generator_;
  Edges edges_;
};

// (3,6)-regular rate-1/2 code of length `coded_bits` (even), columns placed
// one at a time with a fixed-seed generator, 4-cycles avoided when a choice
// exists. Parity positions are the last coded_bits/2 columns. payload_bits
// defaults to info_bits - 16 (no padding).
CodeConfig make_regular_ldpc(std::size_t coded_bits, std::size_t payload_bits = 0,
                             std::uint64_t seed = kDefaultCodeSeed,
                             int bp_iterations = kDefaultBpIterations);

// Length 1024 rate 1/2 code carrying 480 payload bits (60 bytes).
CodeConfig default_code();

// payload ++ CRC ++ zero padding, length info_bits.
Bits build_info_block(std::span<const std::uint8_t> payload, const CodeConfig& cfg);

Bits ldpc_encode(std::span<const std::uint8_t> info, const CodeConfig& cfg);

struct DecodeResult {
  LlrVector posterior_llrs;
  LlrVector extrinsic_llrs;
  Bits hard_bits;
  bool syndrome_ok = false;
  bool crc_ok = false;
  int iterations = 0;

  // Info part of the hard decision.
  Bits payload(const CodeConfig& cfg) const;
};

// Flooding sum-product with the exact tanh rule and early exit on a zero
// syndrome. posterior = channel + extrinsic holds exactly; padding positions
// are treated as known zeros whatever their channel LLR.
DecodeResult ldpc_decode(std::span<const double> channel_llrs, const CodeConfig& cfg);

// Circular-buffer rate matching between a codeword of length n and the E
// bits a layout carries: transmitted bit i is codeword bit i mod n, so E > n
// repeats the codeword and E < n sends its first E bits.
Bits rate_match(std::span<const std::uint8_t> codeword, std::size_t e);

// Soft combining for the decoder: sums the LLRs of every transmitted copy of
// each codeword bit (punctured bits get 0).
LlrVector rate_recover(std::span<const double> llrs, std::size_t n);

// Detector prior per transmitted bit after decoding: everything known about
// codeword bit (i mod n) except transmitted copy i itself,
//   extrinsic[c] + combined[c] - llrs[i].
// With E == n this is exactly the decoder extrinsic.
LlrVector rate_feedback(std::span<const double> decoder_extrinsic, std::span<const double> combined,
                        std::span<const double> llrs);

}  // namespace noma
