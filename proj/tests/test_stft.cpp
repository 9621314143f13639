#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "hkprop/stft.hpp"
#include "hkprop/errors.hpp"
#include "fixtures.hpp"

using namespace hkprop;

namespace {
constexpr double kPi = 3.14159265358979323846;

const std::vector<GridAxis> kAxes{GridAxis{-8.0, 8.0, 512}};

WavefunctionGrid unit_gaussian() {
  WavefunctionGrid g(kAxes, 1.0);
  for (Index i = 0; i < g.size(); ++i) {
    const double x = g.point(i)[0];
    g.data[i] = std::exp(-0.5 * x * x);
  }
  return g;
}

WavefunctionGrid random_bandlimited(std::mt19937_64& rng, int band = 40) {
  WavefunctionGrid f(kAxes, 1.0);
  CVec spec = CVec::Zero(f.size());
  for (Index k = 0; k < band; ++k)
    spec[k] = Complex{hkprop::testing::uniform(rng, -1, 1),
                      hkprop::testing::uniform(rng, -1, 1)};
  f.data = spec;
  fft_all(f.data, f.axes, false);
  return f;
}
}  // namespace

TEST_CASE("gaussian auto-transform matches the closed form") {
  const auto g = unit_gaussian();
  const auto v = stft(g, Window::plain_samples(g.data));
  const Index n_eta = v.eta_count();
  double worst = 0.0;
  for (Index m = 0; m < v.y_count(); ++m) {
    const double y = v.y_at(m)[0];
    for (Index k = 0; k < n_eta; ++k) {
      const double eta = v.eta_at(k)[0];
      const Complex exact = std::pow(2.0, -0.5) *
                            std::exp(-0.25 * (y * y + eta * eta)) *
                            std::exp(Complex{0.0, -0.5 * eta * y});
      worst = std::max(worst, std::abs(v.data[m * n_eta + k] - exact));
    }
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("zero signal transforms to zero") {
  WavefunctionGrid f(kAxes, 1.0);
  const auto v = stft(f, Window::plain_samples(unit_gaussian().data));
  CHECK(v.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("Parseval identity on random band-limited signals") {
  const auto g = unit_gaussian();
  const Window win = Window::plain_samples(g.data);
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = random_bandlimited(rng);
    const auto v = stft(f, win);
    const double expect = f.l2_norm() * g.l2_norm();
    CHECK(std::abs(v.l2_norm() - expect) <= 1e-8 * expect);
  }
}

TEST_CASE("covariance under grid translation") {
  const auto g = unit_gaussian();
  const Window win = Window::plain_samples(g.data);
  std::mt19937_64 rng(29);
  auto f = random_bandlimited(rng, 30);
  const Index shift = 24;
  const double a = shift * kAxes[0].delta();
  auto fs = f;
  for (Index i = 0; i < f.size(); ++i)
    fs.data[i] = f.data[(i - shift + f.size()) % f.size()];
  const auto v = stft(f, win);
  const auto vs = stft(fs, win);
  const Index n_eta = v.eta_count();
  double worst = 0.0;
  for (Index m = 0; m < v.y_count(); ++m) {
    const Index ms = (m - shift + v.y_count()) % v.y_count();
    for (Index k = 0; k < n_eta; ++k) {
      const double eta = v.eta_at(k)[0];
      const Complex expect =
          std::exp(Complex{0.0, -eta * a}) * v.data[ms * n_eta + k];
      worst = std::max(worst, std::abs(vs.data[m * n_eta + k] - expect));
    }
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("linear in f, conjugate-linear in g") {
  const auto g = unit_gaussian();
  std::mt19937_64 rng(31);
  const auto f1 = random_bandlimited(rng, 20);
  const auto f2 = random_bandlimited(rng, 20);
  const Complex a{0.7, -0.3}, b{-0.2, 0.9};

  auto fsum = f1;
  fsum.data = a * f1.data + b * f2.data;
  const Window win = Window::plain_samples(g.data);
  const auto v1 = stft(f1, win);
  const auto v2 = stft(f2, win);
  const auto vs = stft(fsum, win);
  CHECK((vs.data - a * v1.data - b * v2.data).cwiseAbs().maxCoeff() <= 1e-12);

  // scaling the window by c scales the transform by conj(c)
  const Complex c{0.4, 0.8};
  auto gs = g.data;
  gs *= c;
  const auto vg = stft(f1, Window::plain_samples(gs));
  CHECK((vg.data - std::conj(c) * v1.data).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("generalized window: gtilde == 1 reduces to the plain path") {
  const auto f = unit_gaussian();
  const auto vp = stft(f, Window::plain_samples(unit_gaussian().data));
  const Window gen = Window::generalized(
      CMat::Identity(1, 1),
      [](const RVec&, const RVec&, const RVec&) { return Complex{1.0, 0.0}; });
  const auto vg = stft_generalized(f, gen, 2);
  // The two paths differ only in periodic wrap of the far Gaussian tail.
  CHECK((vg.data - vp.data).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("generalized window: 1/(1+eta^2) is pointwise dominated") {
  std::mt19937_64 rng(41);
  const auto f = random_bandlimited(rng, 25);
  const Window gen = Window::generalized(
      CMat::Identity(1, 1), [](const RVec&, const RVec&, const RVec& eta) {
        return Complex{1.0 / (1.0 + eta[0] * eta[0]), 0.0};
      });
  const auto vg = stft_generalized(f, gen, 2);
  const auto vp = stft(f, Window::plain_samples(unit_gaussian().data));
  for (Index i = 0; i < vg.data.size(); ++i)
    CHECK(std::abs(vg.data[i]) <= std::abs(vp.data[i]) + 1e-10);
}

TEST_CASE("generalized window: bounded norm ratios over trials") {
  std::mt19937_64 rng(43);
  const Window gen = Window::generalized(
      CMat::Identity(1, 1), [](const RVec& x, const RVec&, const RVec&) {
        return Complex{std::cos(x[0]), 0.0};
      });
  const double gnorm = unit_gaussian().l2_norm();
  for (int trial = 0; trial < 20; ++trial) {
    const auto f = random_bandlimited(rng, 20);
    const auto vg = stft_generalized(f, gen, 2);
    const double ratio = vg.l2_norm() / f.l2_norm();
    CHECK(ratio <= gnorm * (1.0 + 1e-9));  // |gtilde|_inf = 1
    CHECK(std::isfinite(ratio));
  }
}

TEST_CASE("p_delta values") {
  CHECK(p_delta(RVec::Zero(1), {0}) == Complex{1.0, 0.0});
  const Complex v = p_delta(RVec::Constant(1, 1.0), {1});
  CHECK(std::abs(v - Complex{0.0, 0.5}) <= 1e-15);  // 1/(1-i)^2 = i/2
  const Complex w = p_delta((RVec(2) << 1.0, -2.0).finished(), {0, 1});
  const Complex expect =
      (1.0 / Complex{1.0, -1.0}) * (1.0 / (Complex{1.0, 2.0} * Complex{1.0, 2.0}));
  CHECK(std::abs(w - expect) <= 1e-15);
  CHECK_THROWS_AS(p_delta(RVec::Zero(1), {2}), InvalidInputError);
  CHECK_THROWS_AS(p_delta(RVec::Zero(2), {0}), InvalidInputError);
}

TEST_CASE("csv dump has the documented shape") {
  const auto g = unit_gaussian();
  WavefunctionGrid f(kAxes, 1.0);
  f.data[256] = Complex{1.0, 0.0};
  const auto v = stft(f, Window::plain_samples(g.data));
  std::ostringstream os;
  write_stft_csv(v, os);
  const std::string s = os.str();
  CHECK(s.find("# hkprop-stft-v1") == 0);
  CHECK(s.find("y0,eta0,re,im") != std::string::npos);
}

TEST_CASE("window/grid mismatch rejected") {
  const auto f = unit_gaussian();
  CHECK_THROWS_AS(stft(f, Window::plain_samples(CVec::Zero(16))),
                  GridMismatchError);
}
