#include <benchmark/benchmark.h>

#include <random>

#include "noma/channel.hpp"
#include "noma/detectors.hpp"
#include "noma/receiver.hpp"
#include "noma/transmitter.hpp"

using namespace noma;

namespace {

struct Link {
  SchemeLayout layout;
  ReceivedGrid grid;
};

Link make_link(SchemeKind kind, std::size_t n_ue, std::size_t n_re, double snr_db) {
  auto rng = trial_rng(1, 0, 0);
  auto layout = build_scheme(kind, n_ue, n_re);
  std::bernoulli_distribution coin;
  std::vector<Bits> bits(n_ue);
  for (std::size_t j = 0; j < n_ue; ++j) {
    bits[j].resize(layout.coded_bits(j));
    for (auto& b : bits[j]) b = coin(rng);
  }
  const auto tx = map_all(bits, layout);
  const auto ch = generate_channel(layout, 2, 12, rng);
  auto grid = apply_channel(tx, ch, std::vector<double>(n_ue, snr_db), rng);
  return {std::move(layout), std::move(grid)};
}

const Link& scma_link() {
  static const Link link = make_link(SchemeKind::scma, 6, 384, 0.0);
  return link;
}

const Link& cb_link() {
  static const Link link = make_link(SchemeKind::cb_ofdma, 6, 96, 9.0);
  return link;
}

void report_ops(benchmark::State& state, const DetectorOutput& out) {
  state.counters["ops"] = static_cast<double>(out.op_count + out.inversion_ops);
}

void bm_mpa_scma(benchmark::State& state) {
  const auto& l = scma_link();
  DetectorInput in{l.grid, l.layout, {}, {}, static_cast<int>(state.range(0))};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = mpa_detect(in));
  report_ops(state, out);
}
BENCHMARK(bm_mpa_scma)->Arg(1)->Arg(3);

void bm_epa_scma(benchmark::State& state) {
  const auto& l = scma_link();
  DetectorInput in{l.grid, l.layout, {}, {}, static_cast<int>(state.range(0))};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = epa_detect(in));
  report_ops(state, out);
}
BENCHMARK(bm_epa_scma)->Arg(1)->Arg(3);

void bm_epa_cb_ofdma(benchmark::State& state) {
  const auto& l = cb_link();
  DetectorInput in{l.grid, l.layout, {}, {}, 3};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = epa_detect(in));
  report_ops(state, out);
}
BENCHMARK(bm_epa_cb_ofdma);

void bm_ese_cb_ofdma(benchmark::State& state) {
  const auto& l = cb_link();
  DetectorInput in{l.grid, l.layout, {}, {}, 1};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = ese_detect(in));
  report_ops(state, out);
}
BENCHMARK(bm_ese_cb_ofdma);

void bm_mmse_chip_cb_ofdma(benchmark::State& state) {
  const auto& l = cb_link();
  DetectorInput in{l.grid, l.layout, {}, {}, 1};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = mmse_detect(in, MmseMode::chip));
  report_ops(state, out);
}
BENCHMARK(bm_mmse_chip_cb_ofdma);

// Block vs chip MMSE on a spread layout: the inversion cost grows with L^3.
void bm_mmse_nls(benchmark::State& state) {
  static const Link l = make_link(SchemeKind::nls, 6, 96, 6.0);
  const auto mode = state.range(0) ? MmseMode::block : MmseMode::chip;
  DetectorInput in{l.grid, l.layout, {}, {}, 1};
  DetectorOutput out;
  for (auto _ : state) benchmark::DoNotOptimize(out = mmse_detect(in, mode));
  report_ops(state, out);
}
BENCHMARK(bm_mmse_nls)->Arg(0)->Arg(1);

}  // namespace
