#include <doctest.h>

#include <cmath>
#include <vector>

#include "lungcadex/cade/losses.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/rng.hpp"

using namespace lungcadex;
using namespace lungcadex::cade;

namespace {

std::vector<double> random_probabilities(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform(0.02, 0.98);
  return out;
}

std::vector<double> random_mask(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return out;
}

template <typename Loss>
double relative_error(Loss loss, const std::vector<double>& p, const std::vector<double>& g,
                          const std::vector<double>& analytic) {
  const double h = 1e-5;
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    std::vector<double> up = p, down = p;
    up[i] += h;
    down[i] -= h;
    const double numeric = (loss(up, g) - loss(down, g)) / (2.0 * h);
    diff += (numeric - analytic[i]) * (numeric - analytic[i]);
    norm += numeric * numeric;
  }
  return std::sqrt(diff / std::max(norm, 1e-300));
}

}  // namespace

TEST_CASE("bce of a uniform half prediction is ln 2") {
  const std::vector<double> s(10, 0.5);
  const std::vector<double> g{1, 0, 1, 1, 0, 0, 0, 1, 0, 1};
  CHECK(bce_loss(s, g) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce of a perfect prediction is near zero") {
  const std::vector<double> g{1, 0, 0, 1};
  CHECK(bce_loss(g, g) <= 1e-6);
}

TEST_CASE("bce two-pixel example") {
  CHECK(std::abs(bce_loss(std::vector<double>{0.9, 0.1}, std::vector<double>{1, 0}) - 0.105361) < 1e-6);
}

TEST_CASE("bce clamps probabilities of exactly zero and one") {
  const double v = bce_loss(std::vector<double>{0.0, 1.0}, std::vector<double>{1, 0});
  CHECK(std::isfinite(v));
  CHECK(v == doctest::Approx(-std::log(kProbabilityClamp)).epsilon(1e-9));
}

TEST_CASE("dice examples") {
  const std::vector<double> g{1, 0, 1, 0};
  CHECK(dice_loss(g, g) <= 1e-6);
  CHECK(std::abs(dice_loss(std::vector<double>{0, 1, 0, 1}, g) - 1.0) <= 1e-6);
  CHECK(std::abs(dice_loss(std::vector<double>{1, 1, 0, 0}, g) - 0.5) <= 1e-6);
}

TEST_CASE("dice of two empty masks is zero thanks to smoothing") {
  const std::vector<double> zeros(6, 0.0);
  CHECK(dice_loss(zeros, zeros) == doctest::Approx(0.0));
}

TEST_CASE("combined loss is the unweighted sum of its parts") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = random_probabilities(rng, 16);
    const auto g = random_mask(rng, 16);
    CHECK(combined_loss(p, g) == bce_loss(p, g) + dice_loss(p, g));
  }
  const std::vector<double> g{1, 0, 1, 0};
  CHECK(combined_loss(g, g) <= 2e-6);
  const std::vector<double> half(4, 0.5);
  const std::vector<double> half_ones{1, 1, 0, 0};
  CHECK(std::abs(combined_loss(half, half_ones) - (std::log(2.0) + 1.0 / 3.0)) < 1e-6);
}

TEST_CASE("loss shape mismatch is a contract error") {
  const std::vector<double> a{0.5, 0.5}, b{1.0};
  CHECK_THROWS_AS(bce_loss(a, b), ContractError);
  CHECK_THROWS_AS(dice_loss(a, b), ContractError);
  CHECK_THROWS_AS(combined_loss(a, b), ContractError);
}

TEST_CASE("loss gradients match central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 4 + rng.index(28);
    const auto p = random_probabilities(rng, n);
    const auto g = random_mask(rng, n);
    CHECK(relative_error([](const auto& a, const auto& b) { return bce_loss(a, b); }, p, g,
                             bce_loss_with_gradient(p, g).gradient) < 1e-4);
    CHECK(relative_error([](const auto& a, const auto& b) { return dice_loss(a, b); }, p, g,
                             dice_loss_with_gradient(p, g).gradient) < 1e-4);
    CHECK(relative_error([](const auto& a, const auto& b) { return combined_loss(a, b); }, p, g,
                             combined_loss_with_gradient(p, g).gradient) < 1e-4);
  }
}

TEST_CASE("graph loss node agrees with the scalar loss and its gradient") {
  Rng rng(5);
  const auto p = random_probabilities(rng, 12);
  const auto g = random_mask(rng, 12);
  nn::Tensor t({1, 12});
  for (std::size_t i = 0; i < p.size(); ++i) t[i] = static_cast<float>(p[i]);
  nn::Var probs = nn::Var::parameter(t);
  std::vector<double> pf(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) pf[i] = t[i];
  SegmentationLossTerms terms;
  nn::Var loss = segmentation_loss(probs, g, &terms);
  CHECK(loss.value()[0] == doctest::Approx(combined_loss(pf, g)).epsilon(1e-6));
  CHECK(terms.total == doctest::Approx(terms.bce + terms.dice));
  loss.backward();
  const auto expected = combined_loss_with_gradient(pf, g).gradient;
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(probs.grad()[i] == doctest::Approx(expected[i]).epsilon(1e-5));
}
