#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "hkprop/wavegrid.hpp"
#include "hkprop/errors.hpp"
#include "fixtures.hpp"

using namespace hkprop;

TEST_CASE("grid invariants") {
  CHECK_THROWS_AS(WavefunctionGrid({GridAxis{-1.0, 1.0, 100}}, 0.1),
                  InvalidInputError);
  CHECK_THROWS_AS(WavefunctionGrid({GridAxis{-1.0, 1.0, 64}}, 0.0),
                  InvalidInputError);
  CHECK_THROWS_AS(WavefunctionGrid({GridAxis{1.0, -1.0, 64}}, 0.1),
                  InvalidInputError);
  const WavefunctionGrid g({GridAxis{-2.0, 2.0, 64}}, 0.5);
  CHECK(g.size() == 64);
  CHECK(g.point(0)[0] == -2.0);
  CHECK(g.cell_volume() == doctest::Approx(4.0 / 64));
}

TEST_CASE("coherent state is normalized on an adequate grid") {
  for (const double eps : {0.05, 0.2}) {
    const auto g = coherent_state({GridAxis{-8.0, 8.0, 1024}}, eps,
                                  RVec::Constant(1, 0.3), RVec::Constant(1, 0.7));
    CHECK(std::abs(g.l2_norm() - 1.0) <= 1e-10);
  }
  // 2-d
  const auto g2 = coherent_state({GridAxis{-6.0, 6.0, 128}, GridAxis{-6.0, 6.0, 128}},
                                 0.25, RVec::Zero(2), RVec::Zero(2));
  CHECK(std::abs(g2.l2_norm() - 1.0) <= 1e-10);
}

TEST_CASE("l2 distance cases") {
  auto a = coherent_state({GridAxis{-8.0, 8.0, 512}}, 0.1, RVec::Zero(1),
                          RVec::Zero(1));
  CHECK(l2_distance(a, a) == 0.0);
  auto b = a;
  b.data = -b.data;
  CHECK(l2_distance(a, b) == doctest::Approx(2.0).epsilon(1e-10));

  // brute-force comparison
  std::mt19937_64 rng(3);
  auto c = a, d = a;
  for (Index i = 0; i < c.size(); ++i) {
    c.data[i] = Complex{hkprop::testing::uniform(rng, -1, 1),
                        hkprop::testing::uniform(rng, -1, 1)};
    d.data[i] = Complex{hkprop::testing::uniform(rng, -1, 1),
                        hkprop::testing::uniform(rng, -1, 1)};
  }
  double brute = 0.0;
  for (Index i = 0; i < c.size(); ++i) brute += std::norm(c.data[i] - d.data[i]);
  brute = std::sqrt(brute * c.cell_volume());
  CHECK(l2_distance(c, d) == doctest::Approx(brute).epsilon(1e-14));

  auto e = coherent_state({GridAxis{-8.0, 8.0, 256}}, 0.1, RVec::Zero(1),
                          RVec::Zero(1));
  CHECK_THROWS_AS(l2_distance(a, e), GridMismatchError);
}

TEST_CASE("cubic interpolation reproduces nodes and smooth profiles") {
  const auto g = coherent_state({GridAxis{-8.0, 8.0, 1024}}, 0.2,
                                RVec::Constant(1, 0.4), RVec::Constant(1, 0.9));
  // Node values are reproduced exactly (Lagrange property).
  for (const Index i : {Index{100}, Index{511}, Index{900}}) {
    CHECK(std::abs(g.interpolate(g.point(i)) - g.data[i]) <= 1e-13);
  }
  // Off-node: compare against the analytic coherent state.
  const double eps = 0.2;
  for (double x = -1.0; x <= 1.5; x += 0.137) {
    const double dx = x - 0.4;
    const Complex exact = std::pow(M_PI * eps, -0.25) *
                          std::exp(-dx * dx / (2.0 * eps)) *
                          std::exp(Complex{0.0, 0.9 * dx / eps});
    CHECK(std::abs(g.interpolate(RVec::Constant(1, x)) - exact) <= 5e-6);
  }
  // Outside the box: zero.
  CHECK(g.interpolate(RVec::Constant(1, 11.0)) == Complex{0.0, 0.0});
}

TEST_CASE("spectral gradient matches the analytic derivative") {
  const double eps = 0.2;
  const auto g = coherent_state({GridAxis{-8.0, 8.0, 512}}, eps,
                                RVec::Zero(1), RVec::Constant(1, 0.6));
  const auto grad = spectral_gradient(g);
  for (const Index i : {Index{200}, Index{256}, Index{310}}) {
    const double x = g.point(i)[0];
    const Complex expect = (Complex{0.0, 0.6 / eps} - x / eps) * g.data[i];
    CHECK(std::abs(grad[0].data[i] - expect) <= 1e-8);
  }
}

TEST_CASE("position and momentum extents bracket a coherent state") {
  const double eps = 0.1;
  const auto g = coherent_state({GridAxis{-8.0, 8.0, 1024}}, eps,
                                RVec::Constant(1, 1.0), RVec::Constant(1, -0.5));
  const auto pos = position_extent(g);
  CHECK(pos[0].first < 1.0);
  CHECK(pos[0].second > 1.0);
  CHECK(pos[0].second - pos[0].first < 4.0);
  const auto mom = momentum_extent(g);
  CHECK(mom[0].first < -0.5);
  CHECK(mom[0].second > -0.5);
  CHECK(mom[0].second - mom[0].first < 4.0);
}

TEST_CASE("WFGRID01 round trip is bit exact") {
  const auto dir = std::filesystem::temp_directory_path() / "hkprop_wf_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "psi.wfgrid").string();

  auto g = coherent_state({GridAxis{-8.0, 8.0, 256}}, 0.05,
                          RVec::Constant(1, -0.3), RVec::Constant(1, 1.2));
  save_wfgrid(g, path);
  const auto h = load_wfgrid(path);
  CHECK(h.d == g.d);
  CHECK(h.eps == g.eps);
  CHECK(h.axes == g.axes);
  REQUIRE(h.size() == g.size());
  for (Index i = 0; i < g.size(); ++i) CHECK(h.data[i] == g.data[i]);

  // sidecar exists and mentions the format
  std::ifstream side(path + ".json");
  REQUIRE(side.good());
  std::string text((std::istreambuf_iterator<char>(side)),
                   std::istreambuf_iterator<char>());
  CHECK(text.find("WFGRID01") != std::string::npos);

  // corrupted magic rejected
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOTAGRID garbage";
  }
  CHECK_THROWS_AS(load_wfgrid(path), InvalidInputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("2-d row-major indexing in point()") {
  const WavefunctionGrid g({GridAxis{0.0, 4.0, 4}, GridAxis{0.0, 8.0, 8}}, 0.5);
  // flat = i0 * 8 + i1, x = (i0 * dx0, i1 * dx1)
  CHECK(g.point(0)[0] == 0.0);
  CHECK(g.point(9)[0] == doctest::Approx(1.0));
  CHECK(g.point(9)[1] == doctest::Approx(1.0));
  CHECK(g.point(17)[0] == doctest::Approx(2.0));
  CHECK(g.point(17)[1] == doctest::Approx(1.0));
}
