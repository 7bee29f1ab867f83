#include <doctest.h>

#include <cmath>
#include <random>

#include "noma/messages.hpp"
#include "noma/transmitter.hpp"

using namespace noma;

namespace {

AlphabetPtr qpsk() { return std::make_shared<const Alphabet>(1, gray_qam(4)); }

}  // namespace

TEST_CASE("llr_to_prior: symmetric, certain and mixed segments") {
  const auto a = qpsk();
  const double zero[] = {0.0, 0.0};
  for (double p : llr_to_prior(zero, a).probs) CHECK(p == doctest::Approx(0.25));

  const double certain[] = {INFINITY, INFINITY};
  const auto c = llr_to_prior(certain, a);
  CHECK(c.probs == std::vector<double>{1.0, 0.0, 0.0, 0.0});

  // sigma(ln 3) = 3/4 for the first bit, the second bit is uniform.
  const double mixed[] = {std::log(3.0), 0.0};
  const auto m = llr_to_prior(mixed, a);
  const double expect[] = {0.375, 0.375, 0.125, 0.125};
  for (int i = 0; i < 4; ++i) CHECK(m.probs[i] == doctest::Approx(expect[i]).epsilon(1e-12));

  const double three[] = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(llr_to_prior(three, a), ContractError);
}

TEST_CASE("llr_to_prior then marginals recovers the LLRs") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 4.0);
  const auto a16 = std::make_shared<const Alphabet>(1, gray_qam(16));
  for (int t = 0; t < 200; ++t) {
    const std::vector<double> llr = {n(rng), n(rng), n(rng), n(rng)};
    const auto back = prior_to_llrs(llr_to_prior(llr, a16));
    for (int b = 0; b < 4; ++b) CHECK(back[b] == doctest::Approx(llr[b]).epsilon(1e-9));
  }
}

TEST_CASE("moment_match examples") {
  const auto a = qpsk();
  DiscretePrior point{a, {1.0, 0.0, 0.0, 0.0}};
  const auto g = moment_match(point, 0);
  CHECK(std::abs(g.mean - a->at(0, 0)) < 1e-15);
  CHECK(g.variance == kMinVariance);

  DiscretePrior uniform{a, {0.25, 0.25, 0.25, 0.25}};
  const auto u = moment_match(uniform, 0);
  CHECK(std::abs(u.mean) < 1e-15);
  CHECK(u.variance == doctest::Approx(1.0));

  const auto bpsk = std::make_shared<const Alphabet>(1, std::vector<cplx>{1.0, -1.0});
  const auto b = moment_match(DiscretePrior{bpsk, {0.5, 0.5}}, 0);
  CHECK(std::abs(b.mean) < 1e-15);
  CHECK(b.variance == doctest::Approx(1.0));

  CHECK_THROWS_AS(moment_match(uniform, 1), ContractError);
}

TEST_CASE("moment_match variance is never below the floor") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto a = std::make_shared<const Alphabet>(1, gray_qam(16));
  for (int t = 0; t < 500; ++t) {
    std::vector<double> p(16);
    double s = 0.0;
    for (auto& x : p) s += x = std::pow(u(rng), 8.0);
    for (auto& x : p) x /= s;
    CHECK(moment_match(DiscretePrior{a, p}, 0).variance >= kMinVariance);
  }
}

TEST_CASE("gaussian_divide examples and round trip") {
  const GaussianMessage a{{0.3, -0.2}, 0.7};
  const auto same = gaussian_divide(a, GaussianMessage::uninformative(), {});
  CHECK(same.mean == a.mean);
  CHECK(same.variance == doctest::Approx(a.variance));

  const auto q = gaussian_divide({{0.0, 0.0}, 0.5}, {{0.0, 0.0}, 1.0}, {});
  CHECK(q.variance == doctest::Approx(1.0));
  CHECK(std::abs(q.mean) < 1e-15);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int t = 0; t < 500; ++t) {
    const GaussianMessage x{{u(rng) - 1.0, u(rng) - 1.0}, u(rng)};
    const GaussianMessage y{{u(rng) - 1.0, u(rng) - 1.0}, x.variance + u(rng)};
    const auto r = gaussian_multiply(gaussian_divide(x, y, {}), y);
    CHECK(r.variance == doctest::Approx(x.variance).epsilon(1e-9));
    CHECK(std::abs(r.mean - x.mean) < 1e-9 * (1.0 + std::abs(x.mean)));
  }
}

TEST_CASE("gaussian_divide keeps the previous message on negative variance") {
  const GaussianMessage num{{1.0, 0.0}, 2.0};
  const GaussianMessage den{{0.0, 0.0}, 1.0};  // 1/v = 0.5 - 1 < 0
  const GaussianMessage prev{{0.5, 0.5}, 3.0};
  CHECK_FALSE(try_gaussian_divide(num, den).has_value());
  const auto kept = gaussian_divide(num, den, prev);
  CHECK(kept.mean == prev.mean);
  CHECK(kept.variance == prev.variance);
}

TEST_CASE("symbol_to_bit_llrs: extrinsic stays finite under a certain prior") {
  const std::vector<double> loglik = {-1.0, -2.0, -0.5, -4.0};
  const std::vector<double> prior = {INFINITY, 0.7};
  std::vector<double> ext(2), post(2);
  symbol_to_bit_llrs(loglik, prior, ext, post);
  CHECK(std::isfinite(ext[0]));
  CHECK(post[0] == INFINITY);
  // Bit 1 with bit 0 known to be 0: symbols 00 vs 01.
  CHECK(ext[1] == doctest::Approx(-1.0 - -2.0));
  CHECK(post[1] == doctest::Approx(ext[1] + prior[1]));
}

TEST_CASE("log_add and normalize_log_probs") {
  CHECK(log_add(-INFINITY, 2.0) == 2.0);
  CHECK(log_add(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)));
  std::vector<double> lp = {-800.0, -800.0 + std::log(3.0)};
  normalize_log_probs(lp);
  CHECK(std::exp(lp[0]) == doctest::Approx(0.25));
  CHECK(std::exp(lp[1]) == doctest::Approx(0.75));
}

TEST_CASE("check_llrs rejects NaN but accepts infinities") {
  const double ok[] = {INFINITY, -INFINITY, 0.0};
  CHECK_NOTHROW(check_llrs(ok));
  const double bad[] = {1.0, NAN};
  CHECK_THROWS_AS(check_llrs(bad), ContractError);
}

TEST_CASE("alphabet rejects sizes that are not powers of two") {
  CHECK_THROWS_AS(Alphabet(1, std::vector<cplx>(3)), ContractError);
  CHECK_THROWS_AS(Alphabet(2, std::vector<cplx>(5)), ContractError);
}
