#include <doctest.h>

#include <cmath>

#include "noma/detectors.hpp"
#include "support.hpp"

using namespace noma;
using test::Instance;
using test::max_abs_diff;

namespace {

const DetectorKind kAll[] = {DetectorKind::mpa, DetectorKind::epa, DetectorKind::ese,
                             DetectorKind::mmse_chip, DetectorKind::mmse_block,
                             DetectorKind::brute_force};

// Same physical instance with the layers listed in `perm` order.
Instance permuted(const Instance& in, const std::vector<std::size_t>& perm) {
  const auto& l = in.layout;
  std::vector<std::vector<std::vector<std::size_t>>> fps;
  std::vector<AlphabetPtr> alphabets;
  for (auto p : perm) {
    fps.push_back(l.footprints[p]);
    alphabets.push_back(l.alphabets[p]);
  }
  Instance out;
  out.layout = make_layout(l.kind, l.n_re, l.block_size, fps, alphabets);
  out.grid = in.grid;
  auto& ch = out.grid.channel;
  for (std::size_t j = 0; j < perm.size(); ++j) {
    out.grid.power[j] = in.grid.power[perm[j]];
    for (std::size_t k = 0; k < l.n_re; ++k) {
      for (std::size_t r = 0; r < ch.n_rx; ++r) ch.at(j, k, r) = in.grid.channel.at(perm[j], k, r);
    }
  }
  return out;
}

// Exact per-layer log-likelihood LLRs of a single-layer instance.
LlrVector exact_single_layer(const Instance& inst) {
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  return brute_force_oracle(in).extrinsic_llrs[0];
}

void check_close(const std::vector<LlrVector>& a, const std::vector<LlrVector>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    REQUIRE(a[j].size() == b[j].size());
    for (std::size_t i = 0; i < a[j].size(); ++i) {
      CHECK(std::abs(a[j][i] - b[j][i]) <= tol * (1.0 + std::abs(b[j][i])));
    }
  }
}

}  // namespace

TEST_CASE("detector names") {
  for (auto k : kAll) CHECK(parse_detector_kind(to_string(k)) == k);
  CHECK(parse_detector_kind("mmse") == DetectorKind::mmse_chip);
  CHECK_THROWS_AS(parse_detector_kind("map"), ConfigError);
}

TEST_CASE("mpa: single layer at high SNR recovers the bits confidently") {
  auto inst = test::random_instance(SchemeKind::cb_ofdma, 1, 1, 1, 60.0, 1);
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  const auto out = mpa_detect(in);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(std::abs(out.extrinsic_llrs[0][i]) >= 15.0);
    CHECK((out.extrinsic_llrs[0][i] < 0) == (inst.bits[0][i] == 1));
  }
}

TEST_CASE("mpa: 2 layers on 2 REs equals exhaustive enumeration after one iteration") {
  // Fully shared QPSK on two single-RE blocks: every variable node hangs off
  // one function node, so a single flooding round is already exact.
  for (std::uint64_t t = 0; t < 20; ++t) {
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 2, 2, 1 + t % 2, -5.0 + 2.0 * static_cast<double>(t), 200 + t);
    DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
    CHECK(max_abs_diff(mpa_detect(in).extrinsic_llrs, brute_force_oracle(in).extrinsic_llrs) < 1e-9);
  }
}

TEST_CASE("mpa equals the oracle on random forests, with priors") {
  auto rng = trial_rng(4, 2, 0);
  for (int t = 0; t < 60; ++t) {
    auto layout = test::random_tree_layout(1 + t % 3, 1 + t % 4, 4, rng);
    auto inst = test::transmit(std::move(layout), 1 + t % 2, -2.0 + t % 15, rng);
    const auto priors = test::random_priors(inst.layout, 1.5, rng);
    DetectorInput in{inst.grid, inst.layout, priors, {}, 6};
    CHECK(max_abs_diff(mpa_detect(in).extrinsic_llrs, brute_force_oracle(in).extrinsic_llrs) < 1e-6);
  }
}

TEST_CASE("mpa: op count per function node is m_p^d_f") {
  auto inst = test::random_instance(SchemeKind::scma, 6, 4, 2, 8.0, 3);
  for (int iters : {1, 4}) {
    DetectorInput in{inst.grid, inst.layout, {}, {}, iters};
    const auto out = mpa_detect(in);
    std::uint64_t expect = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(inst.layout.d_f[k] == 3);
      expect += static_cast<std::uint64_t>(std::pow(inst.layout.m_p[k], 3));
    }
    CHECK(out.op_count == expect * static_cast<std::uint64_t>(iters));
  }
}

TEST_CASE("mpa: degree ratio between d_f = 3 and d_f = 2 is m_p") {
  for (int order : {4, 16}) {
    SchemeParams p;
    p.qam_order = order;
    auto two = test::random_instance(SchemeKind::cb_ofdma, 2, 1, 1, 10.0, 4, p);
    auto three = test::random_instance(SchemeKind::cb_ofdma, 3, 1, 1, 10.0, 4, p);
    const auto o2 = mpa_detect({two.grid, two.layout, {}, {}, 1}).op_count;
    const auto o3 = mpa_detect({three.grid, three.layout, {}, {}, 1}).op_count;
    CHECK(o3 == o2 * three.layout.m_p[0]);
    CHECK(three.layout.m_p[0] == static_cast<std::size_t>(order));
  }
}

TEST_CASE("mpa: complexity guard names the offending RE") {
  auto inst = test::random_instance(SchemeKind::cb_ofdma, 9, 3, 1, 10.0, 5);
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  try {
    mpa_detect(in);
    FAIL("expected the complexity guard");
  } catch (const ComplexityGuardError& e) {
    CHECK(e.re() == 0);
    CHECK(std::string(e.what()).find("RE 0") != std::string::npos);
  }
  in.mpa_degree_cap = 9;
  CHECK_NOTHROW(mpa_detect(in));
  // Cancelled layers do not count towards the degree.
  std::vector<bool> cancelled(9, false);
  cancelled[0] = true;
  DetectorInput reduced{inst.grid, inst.layout, {}, cancelled, 1};
  CHECK_NOTHROW(mpa_detect(reduced));
}

TEST_CASE("epa: scalar posterior mean equals the exact single-symbol estimate") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    SchemeParams p;
    p.qam_order = s % 2 ? 16 : 4;
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 1, 1, 1, 3.0 + static_cast<double>(s), s, p);
    EpaTrace trace;
    epa_detect({inst.grid, inst.layout, {}, {}, 1}, &trace);
    const auto& a = *inst.layout.alphabets[0];
    const cplx g = inst.grid.gain(0, 0, 0);
    double z = 0.0;
    cplx mean{};
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double w = std::exp(-std::norm(inst.grid.y_at(0, 0) - g * a.at(i, 0)) / inst.grid.noise_var);
      z += w;
      mean += w * a.at(i, 0);
    }
    CHECK(std::abs(trace.posterior_mean[0][0] - mean / z) < 1e-9);
  }
}

TEST_CASE("epa: all layers cancelled gives an empty output") {
  auto inst = test::random_instance(SchemeKind::scma, 3, 8, 2, 5.0, 6);
  const auto out = epa_detect({inst.grid, inst.layout, {}, {true, true, true}, 3});
  CHECK(out.op_count == 0);
  for (const auto& v : out.extrinsic_llrs) CHECK(v.empty());
}

TEST_CASE("epa agrees with mpa in sign on 2-layer trees at 20 dB") {
  // 2 QPSK layers sharing 2 REs, seen by 2 antennas. A trial agrees when
  // every bit LLR has the same sign under both detectors.
  std::size_t agree = 0;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 2, 2, 2, 20.0, 5000 + t);
    DetectorInput in{inst.grid, inst.layout, {}, {}, 3};
    const auto e = epa_detect(in), m = mpa_detect(in);
    bool same = true;
    for (std::size_t j = 0; j < 2; ++j) {
      for (std::size_t i = 0; i < e.extrinsic_llrs[j].size(); ++i) {
        same = same && (e.extrinsic_llrs[j][i] >= 0) == (m.extrinsic_llrs[j][i] >= 0);
      }
    }
    agree += same;
  }
  CHECK(agree >= 990);
}

TEST_CASE("epa: known interferers give the conditional mean") {
  // Every other layer has a certain prior, so its Gaussian message carries
  // only the variance floor; the remaining layer sees the exact conditional
  // likelihood up to that floor.
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 3, 4, 2, 6.0, 100 + s);
    std::vector<LlrVector> priors(3);
    for (std::size_t j = 1; j < 3; ++j) {
      for (auto b : inst.bits[j]) priors[j].push_back(b ? -INFINITY : INFINITY);
    }
    EpaTrace trace;
    epa_detect({inst.grid, inst.layout, priors, {}, 1}, &trace);
    const auto& a = *inst.layout.alphabets[0];
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<cplx> resid(2);
      for (std::size_t r = 0; r < 2; ++r) {
        resid[r] = inst.grid.y_at(k, r);
        for (std::size_t j = 1; j < 3; ++j) resid[r] -= inst.grid.gain(j, k, r) * inst.tx.symbols[j][k];
      }
      std::vector<double> ll(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t r = 0; r < 2; ++r) ll[i] -= std::norm(resid[r] - inst.grid.gain(0, k, r) * a.at(i, 0));
      }
      normalize_log_probs(ll);
      cplx mean{};
      for (std::size_t i = 0; i < a.size(); ++i) mean += std::exp(ll[i]) * a.at(i, 0);
      CHECK(std::abs(trace.posterior_mean[0][k] - mean) < 1e-6);
      for (std::size_t j = 1; j < 3; ++j) CHECK(std::abs(trace.posterior_mean[j][k] - inst.tx.symbols[j][k]) < 1e-12);
    }
  }
}

TEST_CASE("epa: op count is affine in M at fixed topology") {
  std::vector<double> ops;
  for (int m : {4, 16, 64}) {
    SchemeParams p;
    p.qam_order = m;
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 4, 12, 2, 10.0, 7, p);
    ops.push_back(static_cast<double>(epa_detect({inst.grid, inst.layout, {}, {}, 3}).op_count));
  }
  const double slope1 = (ops[1] - ops[0]) / 12.0, slope2 = (ops[2] - ops[1]) / 48.0;
  CHECK(slope1 > 0.0);
  CHECK(slope1 == doctest::Approx(slope2).epsilon(1e-12));
}

TEST_CASE("ese: single layer equals exact demodulation") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 1, 6, 1 + s % 2, 2.0 + static_cast<double>(s), 20 + s);
    const auto ese = ese_detect({inst.grid, inst.layout, {}, {}, 1});
    check_close(ese.extrinsic_llrs, {exact_single_layer(inst)}, 1e-9);
  }
}

TEST_CASE("ese: orthogonal channels decouple the layers") {
  auto inst = test::random_instance(SchemeKind::cb_ofdma, 2, 6, 2, 5.0, 30);
  auto& ch = inst.grid.channel;
  for (std::size_t k = 0; k < 6; ++k) {
    ch.at(0, k, 0) = {0.8, 0.3}, ch.at(0, k, 1) = {0.0, 0.0};
    ch.at(1, k, 0) = {0.0, 0.0}, ch.at(1, k, 1) = {-0.4, 1.1};
  }
  test::strip_noise(inst.grid, inst.tx);
  auto single = inst.grid;
  cancel_layer(single, 1, inst.tx.symbols[1]);
  const auto both = ese_detect({inst.grid, inst.layout, {}, {}, 1});
  const auto alone = ese_detect({single, inst.layout, {}, {false, true}, 1});
  check_close({both.extrinsic_llrs[0]}, {alone.extrinsic_llrs[0]}, 1e-12);
}

TEST_CASE("ese: certain priors of interferers match hard cancellation") {
  auto inst = test::random_instance(SchemeKind::scma, 3, 8, 2, 8.0, 31);
  std::vector<LlrVector> priors(3);
  for (std::size_t j = 1; j < 3; ++j) {
    for (auto b : inst.bits[j]) priors[j].push_back(b ? -INFINITY : INFINITY);
  }
  const auto soft = ese_detect({inst.grid, inst.layout, priors, {}, 1});
  auto g = inst.grid;
  for (std::size_t j = 1; j < 3; ++j) cancel_layer(g, j, inst.tx.symbols[j]);
  const auto hard = ese_detect({g, inst.layout, {}, {false, true, true}, 1});
  check_close({soft.extrinsic_llrs[0]}, {hard.extrinsic_llrs[0]}, 1e-6);
}

TEST_CASE("mmse: scalar Wiener filter equals exact demodulation for one layer") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    auto inst = test::random_instance(SchemeKind::cb_ofdma, 1, 6, 1, 1.0 + static_cast<double>(s), 40 + s);
    const auto out = mmse_detect({inst.grid, inst.layout, {}, {}, 1}, MmseMode::chip);
    check_close(out.extrinsic_llrs, {exact_single_layer(inst)}, 1e-9);
  }
}

TEST_CASE("mmse: block and chip coincide when L = 1") {
  auto inst = test::random_instance(SchemeKind::cb_ofdma, 4, 12, 2, 4.0, 50);
  auto rng = trial_rng(4, 4, 0);
  const auto priors = test::random_priors(inst.layout, 2.0, rng);
  const auto chip = mmse_detect({inst.grid, inst.layout, priors, {}, 1}, MmseMode::chip);
  const auto block = mmse_detect({inst.grid, inst.layout, priors, {}, 1}, MmseMode::block);
  check_close(block.extrinsic_llrs, chip.extrinsic_llrs, 1e-12);
  CHECK(block.inversion_ops == chip.inversion_ops);
}

TEST_CASE("mmse: block inversion cost is L^2 times chip cost") {
  for (std::size_t L : {2, 4, 8}) {
    SchemeParams p;
    p.spreading_length = L;
    auto inst = test::random_instance(SchemeKind::nls, 3, 2 * L, 2, 5.0, 60 + L, p);
    const auto chip = mmse_detect({inst.grid, inst.layout, {}, {}, 1}, MmseMode::chip);
    const auto block = mmse_detect({inst.grid, inst.layout, {}, {}, 1}, MmseMode::block);
    CHECK(chip.inversion_ops == 2 * L * 8);  // one 2x2 solve per RE
    CHECK(block.inversion_ops == chip.inversion_ops * L * L);
  }
}

TEST_CASE("mmse: block mode needs a spread layout; singular covariance is regularized") {
  // A random 2-RE alphabet does not factor into symbol times signature.
  auto rng = trial_rng(4, 70, 0);
  std::vector<std::vector<std::vector<std::size_t>>> fps = {{{0, 1}}};
  auto tree = test::transmit(make_layout(SchemeKind::scma, 2, 2, fps, {test::random_alphabet(4, 2, rng)}), 1, 5.0, rng);
  REQUIRE_FALSE(tree.layout.is_spread());
  CHECK_THROWS_AS(mmse_detect({tree.grid, tree.layout, {}, {}, 1}, MmseMode::block), ConfigError);

  auto inst = test::random_instance(SchemeKind::cb_ofdma, 3, 4, 1, 5.0, 71);
  inst.grid.noise_var = 0.0;
  for (auto& h : inst.grid.channel.h) h = {1.0, 0.0};
  std::vector<LlrVector> priors(3);
  for (std::size_t j = 0; j < 3; ++j) {
    for (auto b : inst.bits[j]) priors[j].push_back(b ? -INFINITY : INFINITY);
  }
  for (auto mode : {MmseMode::chip, MmseMode::block}) {
    const auto out = mmse_detect({inst.grid, inst.layout, priors, {}, 1}, mode);
    for (const auto& v : out.extrinsic_llrs)
      for (double x : v) CHECK_FALSE(std::isnan(x));
  }
}

TEST_CASE("brute force: one layer equals mpa, refuses huge problems") {
  auto inst = test::random_instance(SchemeKind::scma, 1, 8, 2, 4.0, 80);
  DetectorInput in{inst.grid, inst.layout, {}, {}, 1};
  CHECK(max_abs_diff(brute_force_oracle(in).extrinsic_llrs, mpa_detect(in).extrinsic_llrs) < 1e-9);
  auto big = test::random_instance(SchemeKind::cb_ofdma, 2, 6, 1, 4.0, 81);
  CHECK_THROWS_AS(brute_force_oracle({big.grid, big.layout, {}, {}, 1}), ConfigError);
}

TEST_CASE("all detectors: extrinsic plus prior equals the internal posterior") {
  auto rng = trial_rng(4, 5, 0);
  for (auto kind : kAll) {
    CAPTURE(to_string(kind));
    const auto scheme = kind == DetectorKind::mmse_block ? SchemeKind::nls : SchemeKind::scma;
    const std::size_t n_re = kind == DetectorKind::brute_force ? 4 : 16;
    auto inst = test::random_instance(scheme, kind == DetectorKind::brute_force ? 3 : 6, n_re, 2, 3.0, 90);
    const auto priors = test::random_priors(inst.layout, 2.0, rng);
    const auto out = detect(kind, {inst.grid, inst.layout, priors, {}, 3});
    for (std::size_t j = 0; j < priors.size(); ++j) {
      for (std::size_t i = 0; i < priors[j].size(); ++i) {
        const double sum = out.extrinsic_llrs[j][i] + priors[j][i];
        CHECK(std::abs(out.posterior_llrs[j][i] - sum) <= 1e-9 * (1.0 + std::abs(sum)));
      }
    }
  }
}

TEST_CASE("all detectors: zero-valued priors reproduce the uniform-prior output") {
  for (auto kind : kAll) {
    CAPTURE(to_string(kind));
    const auto scheme = kind == DetectorKind::mmse_block ? SchemeKind::nls : SchemeKind::scma;
    auto inst = test::random_instance(scheme, 3, 4, 2, 3.0, 91);
    std::vector<LlrVector> zeros(3);
    for (std::size_t j = 0; j < 3; ++j) zeros[j].assign(inst.layout.coded_bits(j), 0.0);
    const auto a = detect(kind, {inst.grid, inst.layout, {}, {}, 3});
    const auto b = detect(kind, {inst.grid, inst.layout, zeros, {}, 3});
    CHECK(a.extrinsic_llrs == b.extrinsic_llrs);
  }
}

TEST_CASE("all detectors: layer permutation equivariance") {
  auto rng = trial_rng(4, 6, 0);
  for (auto kind : kAll) {
    CAPTURE(to_string(kind));
    const auto scheme = kind == DetectorKind::mmse_block ? SchemeKind::nls : SchemeKind::scma;
    const std::size_t n_layers = kind == DetectorKind::brute_force ? 3 : 5;
    auto inst = test::random_instance(scheme, n_layers, kind == DetectorKind::brute_force ? 4 : 16, 2, 4.0, 92);
    const auto priors = test::random_priors(inst.layout, 1.0, rng);
    std::vector<std::size_t> perm(n_layers);
    for (std::size_t j = 0; j < n_layers; ++j) perm[j] = (j + 2) % n_layers;
    const auto p = permuted(inst, perm);
    std::vector<LlrVector> pp;
    for (auto j : perm) pp.push_back(priors[j]);
    const auto a = detect(kind, {inst.grid, inst.layout, priors, {}, 3});
    const auto b = detect(kind, {p.grid, p.layout, pp, {}, 3});
    std::vector<LlrVector> back(n_layers);
    for (std::size_t j = 0; j < n_layers; ++j) back[perm[j]] = b.extrinsic_llrs[j];
    check_close(back, a.extrinsic_llrs, 1e-8);
  }
}

TEST_CASE("all detectors: a cancelled layer equals a layer with zero channel") {
  for (auto kind : kAll) {
    CAPTURE(to_string(kind));
    const auto scheme = kind == DetectorKind::mmse_block ? SchemeKind::nls : SchemeKind::scma;
    auto inst = test::random_instance(scheme, 3, 4, 2, 6.0, 93);
    auto& ch = inst.grid.channel;
    for (std::size_t k = 0; k < ch.n_re; ++k)
      for (std::size_t r = 0; r < ch.n_rx; ++r) ch.at(1, k, r) = {};
    test::strip_noise(inst.grid, inst.tx);
    const auto excluded = detect(kind, {inst.grid, inst.layout, {}, {false, true, false}, 3});
    const auto zeroed = detect(kind, {inst.grid, inst.layout, {}, {}, 3});
    CHECK(excluded.extrinsic_llrs[1].empty());
    for (std::size_t j : {0, 2}) check_close({excluded.extrinsic_llrs[j]}, {zeroed.extrinsic_llrs[j]}, 1e-9);
  }
}

TEST_CASE("detectors are deterministic and pure") {
  auto inst = test::random_instance(SchemeKind::scma, 6, 16, 2, 3.0, 94);
  const auto before = inst.grid.y;
  for (auto kind : kAll) {
    if (kind == DetectorKind::brute_force || kind == DetectorKind::mmse_block) continue;
    const auto a = detect(kind, {inst.grid, inst.layout, {}, {}, 3});
    const auto b = detect(kind, {inst.grid, inst.layout, {}, {}, 3});
    CHECK(a.extrinsic_llrs == b.extrinsic_llrs);
    CHECK(a.op_count == b.op_count);
  }
  CHECK(inst.grid.y == before);
}

TEST_CASE("detectors reject malformed inputs") {
  auto inst = test::random_instance(SchemeKind::scma, 3, 8, 2, 3.0, 95);
  std::vector<LlrVector> wrong(3, LlrVector(5, 0.0));
  CHECK_THROWS_AS(epa_detect({inst.grid, inst.layout, wrong, {}, 3}), ContractError);
  std::vector<LlrVector> nan(3);
  nan[0].assign(inst.layout.coded_bits(0), NAN);
  CHECK_THROWS_AS(mpa_detect({inst.grid, inst.layout, nan, {}, 3}), ContractError);
  CHECK_THROWS_AS(ese_detect({inst.grid, inst.layout, {}, {true}, 1}), ContractError);
}
