#include <algorithm>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include "noma/harness.hpp"
#include "noma_tools/cli.hpp"

namespace noma {

namespace {

struct Instance {
  SchemeLayout layout;
  ReceivedGrid grid;
};

Instance random_instance(SchemeKind kind, std::size_t n_layers, std::size_t n_re, std::size_t n_rx,
                         double snr_db, std::uint64_t trial) {
  auto rng = trial_rng(0x5e1f, 1, trial);
  auto layout = build_scheme(kind, n_layers, n_re);
  std::vector<Bits> bits(n_layers);
  for (std::size_t j = 0; j < n_layers; ++j) {
    bits[j].resize(layout.coded_bits(j));
    for (auto& b : bits[j]) b = static_cast<std::uint8_t>(rng() & 1U);
  }
  const auto tx = map_all(bits, layout);
  const auto ch = generate_channel(layout, n_rx, 1, rng);
  const std::vector<double> snr(n_layers, snr_db);
  auto grid = apply_channel(tx, ch, snr, rng);
  return {std::move(layout), std::move(grid)};
}

double max_llr_gap(const DetectorOutput& a, const DetectorOutput& b) {
  double gap = 0.0;
  for (std::size_t j = 0; j < a.extrinsic_llrs.size(); ++j) {
    for (std::size_t i = 0; i < a.extrinsic_llrs[j].size(); ++i) {
      gap = std::max(gap, std::abs(a.extrinsic_llrs[j][i] - b.extrinsic_llrs[j][i]));
    }
  }
  return gap;
}

bool check_crc() {
  const std::string text = "123456789";
  Bits bits;
  for (unsigned char c : text) {
    for (int i = 7; i >= 0; --i) bits.push_back(static_cast<std::uint8_t>((c >> i) & 1U));
  }
  return crc16_ccitt_false(bits) == 0x29B1;
}

bool check_ldpc() {
  const auto code = make_regular_ldpc(192, 80);
  auto rng = trial_rng(0x5e1f, 2, 0);
  for (int t = 0; t < 20; ++t) {
    Bits payload(code.payload_bits());
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng() & 1U);
    const auto cw = ldpc_encode(build_info_block(payload, code), code);
    const auto syndrome = code.parity_check().multiply(cw);
    if (std::any_of(syndrome.begin(), syndrome.end(), [](auto s) { return s != 0; })) return false;
    LlrVector llr(cw.size());
    for (std::size_t i = 0; i < cw.size(); ++i) llr[i] = cw[i] ? -2.0 : 2.0;
    llr[3] = -llr[3];  // one wrong but weak position
    llr[3] *= 0.25;
    const auto res = ldpc_decode(llr, code);
    if (!res.crc_ok || res.payload(code) != payload) return false;
  }
  return true;
}

bool check_mpa_tree() {
  for (std::uint64_t t = 0; t < 10; ++t) {
    auto inst = random_instance(SchemeKind::scma, 2, 4, 1 + t % 2, 4.0 + static_cast<double>(t), t);
    DetectorInput in{inst.grid, inst.layout, {}, {}, 3};
    if (max_llr_gap(mpa_detect(in), brute_force_oracle(in)) > 1e-6) return false;
  }
  return true;
}

bool check_epa_scalar() {
  auto inst = random_instance(SchemeKind::cb_ofdma, 1, 1, 1, 3.0, 11);
  EpaTrace trace;
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  epa_detect(in, &trace);
  const auto& a = *inst.layout.alphabets[0];
  const cplx g = inst.grid.gain(0, 0, 0);
  double z = 0.0;
  cplx mean{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double w = std::exp(-std::norm(inst.grid.y_at(0, 0) - g * a.at(i, 0)) / inst.grid.noise_var);
    z += w;
    mean += w * a.at(i, 0);
  }
  return std::abs(trace.posterior_mean[0][0] - mean / z) < 1e-9;
}

bool check_mmse_ratio() {
  auto inst = random_instance(SchemeKind::nls, 3, 8, 2, 5.0, 12);
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  const auto chip = mmse_detect(in, MmseMode::chip);
  const auto block = mmse_detect(in, MmseMode::block);
  return block.inversion_ops == chip.inversion_ops * 16;
}

bool check_determinism() {
  auto cfgs = parse_experiments(
      "scheme = cb_ofdma\nn_ue = 2\ndetector = mmse\nic = hybrid_pic\nouter_iterations = 1\n"
      "coded_bits = 96\ntbs_bits = 24\nsnr_db = 4, 8\nn_blocks = 8\nseed = 9\nthreads = 1\n");
  std::ostringstream a, b;
  emit_csv(run_sweep(cfgs[0]), a);
  cfgs[0].shuffle_trials = true;
  cfgs[0].shuffle_seed = 5;
  emit_csv(run_sweep(cfgs[0]), b);
  return a.str() == b.str();
}

}  // namespace

int run_selftest(std::ostream& out) {
  const std::vector<std::pair<const char*, std::function<bool()>>> checks = {
      {"crc16 check value 0x29B1", check_crc},
      {"ldpc encode/decode round trip", check_ldpc},
      {"mpa equals exhaustive oracle on trees", check_mpa_tree},
      {"epa single-symbol posterior mean", check_epa_scalar},
      {"mmse block/chip inversion ratio L^2", check_mmse_ratio},
      {"sweep is independent of trial order", check_determinism},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  exception: " << e.what() << '\n';
    }
    out << (ok ? "[ok]   " : "[FAIL] ") << name << '\n';
    failures += ok ? 0 : 1;
  }
  out << (failures ? "selftest failed\n" : "selftest passed\n");
  return failures;
}

}  // namespace noma
