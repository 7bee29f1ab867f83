#pragma once

// NoMA transmitter schemes behind a single layout contract.
//
// A layout splits the RE grid into blocks of `block_size` consecutive REs.
// Every layer sends one symbol-block per grid block, placed on its footprint
// (a fixed-size subset of the block's REs). Detectors only ever see layouts.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noma/messages.hpp"
#include "noma/types.hpp"

namespace noma {

enum class SchemeKind { cb_ofdma, nls, scma };

std::string to_string(SchemeKind kind);
SchemeKind parse_scheme_kind(const std::string& text);

inline constexpr std::uint64_t kSignatureSeed = 0x4e4c5301;
inline constexpr std::size_t kScmaCapacity = 6;

// Codebook file contents: n_layers x M codewords over L REs, zeros marking
// REs a layer does not occupy.
struct Codebook {
  std::size_t m = 0;
  std::size_t block_size = 0;
  std::size_t n_layers = 0;
  std::vector<cplx> values;  // index ((layer * m) + symbol) * block_size + re

  cplx at(std::size_t layer, std::size_t symbol, std::size_t re) const {
    return values[(layer * m + symbol) * block_size + re];
  }
};

// Text format: header "M L n_layers", then one "re im" line per value in
// layer, symbol, RE order. Loading checks unit energy per occupied RE
// (tolerance 1e-6) and rescales to exact unit energy.
Codebook load_codebook(const std::string& path);
Codebook parse_codebook(const std::string& text);
void save_codebook(const Codebook& cb, const std::string& path);
std::string format_codebook(const Codebook& cb);

struct SchemeParams {
  int qam_order = 4;                 // cb_ofdma constellation size
  std::size_t spreading_length = 4;  // nls L
  std::optional<Codebook> codebook;  // overrides the default nls/scma construction
};

// Distinct values a layer can put on one of its REs.
struct Projection {
  std::vector<cplx> points;
  std::vector<std::uint16_t> index;  // symbol -> point
};

struct SchemeLayout {
  SchemeKind kind = SchemeKind::cb_ofdma;
  std::size_t n_layers = 0;
  std::size_t n_re = 0;
  std::size_t block_size = 1;
  // footprints[j][b]: REs occupied by layer j in block b, ascending.
  std::vector<std::vector<std::vector<std::size_t>>> footprints;
  std::vector<AlphabetPtr> alphabets;
  // projections[j][t]: per-RE projection of layer j's alphabet at footprint position t.
  std::vector<std::vector<Projection>> projections;
  // Set when each alphabet is base[i] * spreading[t] (cb_ofdma, nls).
  std::vector<std::vector<cplx>> spreading;
  std::vector<std::vector<cplx>> base_points;
  std::vector<std::size_t> d_f;  // per RE
  std::vector<std::size_t> m_p;  // per RE, largest projection among colliding layers

  std::size_t n_blocks() const { return block_size ? n_re / block_size : 0; }
  std::size_t bits_per_symbol(std::size_t layer) const {
    return alphabets[layer]->bits_per_symbol();
  }
  std::size_t coded_bits(std::size_t layer) const { return n_blocks() * bits_per_symbol(layer); }
  bool is_spread() const { return !spreading.empty(); }

  // Position of `re` in layer j's footprint for that block, or nullopt.
  std::optional<std::size_t> position_of(std::size_t layer, std::size_t re) const;
};

// Generic constructor: derives d_f, m_p, projections and the spreading
// structure, and checks the unit-energy invariant.
SchemeLayout make_layout(SchemeKind kind, std::size_t n_re, std::size_t block_size,
                         std::vector<std::vector<std::vector<std::size_t>>> footprints,
                         std::vector<AlphabetPtr> alphabets);

SchemeLayout build_scheme(SchemeKind kind, std::size_t n_layers, std::size_t n_re,
                          const SchemeParams& params = {});

// Gray-labeled square QAM with unit average energy (M = 4, 16, 64, ...).
std::vector<cplx> gray_qam(int order);

// Default codebooks as they would appear in a codebook file.
Codebook codebook_from_layout(const SchemeLayout& layout);

// One layer's row of the transmitted grid; zero off the footprint.
std::vector<cplx> map_bits(std::size_t layer, std::span<const std::uint8_t> coded_bits,
                           const SchemeLayout& layout);

struct TxGrid {
  std::size_t n_re = 0;
  std::vector<std::vector<cplx>> symbols;  // [layer][re]
};

TxGrid map_all(std::span<const Bits> coded_bits, const SchemeLayout& layout);

// The standard 4 x 6 SCMA indicator: footprint REs of each layer within a block of 4.
const std::vector<std::vector<std::size_t>>& scma_indicator();

}  // namespace noma
