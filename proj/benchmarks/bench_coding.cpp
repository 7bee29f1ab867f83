#include <benchmark/benchmark.h>

#include <random>

#include "noma/coding.hpp"
#include "noma/channel.hpp"

using namespace noma;

namespace {

void bm_crc(benchmark::State& state) {
  Bits bits(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(crc16_ccitt_false(bits));
  state.SetBytesProcessed(state.iterations() * state.range(0) / 8);
}
BENCHMARK(bm_crc)->Arg(64)->Arg(1024);

void bm_ldpc_encode(benchmark::State& state) {
  const auto code = default_code();
  const auto info = build_info_block(Bits(code.payload_bits(), 1), code);
  for (auto _ : state) benchmark::DoNotOptimize(ldpc_encode(info, code));
}
BENCHMARK(bm_ldpc_encode);

// Decoding a noisy codeword at Eb/N0 = 2 dB, where a few iterations are needed.
void bm_ldpc_decode(benchmark::State& state) {
  const auto code = default_code();
  auto rng = trial_rng(3, 0, 0);
  const auto cw = ldpc_encode(build_info_block(Bits(code.payload_bits(), 0), code), code);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double sigma = std::sqrt(1.0 / (2.0 * code.rate() * std::pow(10.0, 0.2)));
  LlrVector llr(cw.size());
  for (std::size_t i = 0; i < cw.size(); ++i) {
    llr[i] = 2.0 * ((cw[i] ? -1.0 : 1.0) + sigma * noise(rng)) / (sigma * sigma);
  }
  for (auto _ : state) benchmark::DoNotOptimize(ldpc_decode(llr, code));
}
BENCHMARK(bm_ldpc_decode);

}  // namespace
