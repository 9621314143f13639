#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "hkprop/fio.hpp"
#include "hkprop/potential.hpp"
#include "hkprop/splitstep.hpp"
#include "hkprop/errors.hpp"
#include "fixtures.hpp"

using namespace hkprop;
using hkprop::testing::closed_form_bundle;

namespace {
constexpr double kPi = 3.14159265358979323846;

const std::vector<GridAxis> kAxes1024{GridAxis{-8.0, 8.0, 1024}};

FioOptions two_threads() {
  FioOptions o;
  o.threads = 2;
  return o;
}

TrajectoryGridBundle integrated_bundle(const std::string& pot, double t,
                                       double q0, double p0, double half_y,
                                       double half_e, double spacing,
                                       const SpreadingMatrix& theta) {
  const Potential v = make_potential(pot, {}, 1);
  const std::vector<double> times =
      t > 0.0 ? std::vector<double>{0.0, t} : std::vector<double>{0.0};
  return integrate_bundle(v, RVec::Constant(1, q0 - half_y),
                          RVec::Constant(1, q0 + half_y),
                          RVec::Constant(1, p0 - half_e),
                          RVec::Constant(1, p0 + half_e),
                          RVec::Constant(1, spacing), RVec::Constant(1, spacing),
                          theta, times, {}, 2);
}
}  // namespace

TEST_CASE("phase: center value, t = 0 form, nonnegative imaginary part") {
  std::mt19937_64 rng(3);
  TrajectoryState node;
  node.t = 0.0;
  node.X = RVec::Constant(1, 0.7);
  node.Xi = RVec::Constant(1, -0.4);
  node.S = 1.234;
  node.theta = CMat::Identity(1, 1);

  // x = X: the phase collapses to the real action.
  const Complex at_center = fio_phase(node.X, node);
  CHECK(at_center.real() == doctest::Approx(1.234));
  CHECK(at_center.imag() == 0.0);

  // t = 0 node: Phi = eta (x - y) + i |x - y|^2 / 2.
  node.S = 0.0;
  for (double x = -1.0; x <= 1.0; x += 0.37) {
    const Complex phi = fio_phase(RVec::Constant(1, x), node);
    const double dx = x - 0.7;
    CHECK(std::abs(phi - Complex{-0.4 * dx, 0.5 * dx * dx}) <= 1e-15);
  }

  // Im Phi = (1/2) dx . Re Theta dx for random complex symmetric Theta.
  for (int trial = 0; trial < 25; ++trial) {
    TrajectoryState n2;
    n2.X = RVec::Random(2);
    n2.Xi = RVec::Random(2);
    n2.S = hkprop::testing::uniform(rng, -1, 1);
    n2.theta = hkprop::testing::random_spreading(2, rng);
    const RVec x = RVec::Random(2);
    const RVec dx = x - n2.X;
    const double expect = 0.5 * dx.dot(n2.theta.real() * dx);
    const Complex phi = fio_phase(x, n2);
    CHECK(std::abs(phi.imag() - expect) <= 1e-14);
    CHECK(phi.imag() >= 0.0);
  }
}

TEST_CASE("mollifier families: plateau, tails") {
  const auto at = [](const Mollifier& m, double eta) {
    return m.eval(RVec::Constant(1, eta));
  };
  const Mollifier g = Mollifier::gaussian(8.0);
  const Mollifier b = Mollifier::bump(8.0);
  CHECK(at(g, 0.0) == 1.0);
  CHECK(at(b, 0.0) == 1.0);
  CHECK(at(g, 3.9) == 1.0);  // inside the |eta| <= lambda/2 plateau
  CHECK(at(b, 3.9) == 1.0);
  CHECK(at(b, 8.1) == 0.0);  // bump vanishes beyond lambda
  CHECK(at(g, 8.0) == doctest::Approx(std::exp(-0.5)));  // gaussian tail profile
  CHECK(at(g, 16.0) == doctest::Approx(std::exp(-2.0 * 1.5 * 1.5)));
  CHECK(at(g, 6.0) < 1.0);
  CHECK(at(Mollifier::none(), 123.0) == 1.0);
}

TEST_CASE("apply_fio agrees with a direct dense summation oracle") {
  // Tiny lattice, all symbol categories, x-dependent polynomial factor.
  const double eps = 0.3;
  const auto bundle = closed_form_bundle(true, 0.6, -0.5, 0.5, -0.4, 0.6, 0.25);
  const QuadratureSpec quad =
      QuadratureSpec::match(bundle, Mollifier::gaussian(3.0));
  const std::vector<GridAxis> axes{GridAxis{-4.0, 4.0, 32}};
  const auto phi = coherent_state(axes, eps, RVec::Zero(1), RVec::Constant(1, 0.2));

  const auto poly_V = [](const RVec& x, const RVec& y, const RVec& eta) {
    CVec v(1);
    v[0] = Complex{x[0] - 0.3 * y[0], 0.2 * eta[0]};
    return v;
  };
  const auto poly_w = [](const RVec& y, const RVec& eta) {
    return Complex{std::exp(-0.5 * (y[0] * y[0] + eta[0] * eta[0])), 0.1};
  };

  for (const auto& symbol :
       {FIOSymbol::one(), FIOSymbol::hk(),
        FIOSymbol::polynomial_test(poly_V, poly_w)}) {
    const auto out = apply_fio(bundle, 0, symbol, phi, axes, quad, two_threads());

    const Index n_eta = bundle.eta_count();
    const double cell = bundle.cell_volume();
    for (Index xi = 0; xi < out.size(); ++xi) {
      const RVec x = out.point(xi);
      Complex acc{0.0, 0.0};
      for (Index node = 0; node < bundle.node_count(); ++node) {
        const auto& st = bundle.states[0][node];
        const RVec y = bundle.y_at(node / n_eta);
        const RVec eta = bundle.eta_at(node % n_eta);
        Complex u{1.0, 0.0};
        if (symbol.kind == FIOSymbol::Kind::HK) u = st.u0;
        if (symbol.kind == FIOSymbol::Kind::PolynomialTest) {
          const CVec v = poly_V(x, y, eta);
          u = (v[0] * (x[0] - st.X[0])) * poly_w(y, eta);
        }
        const Complex ph = fio_phase(x, st);
        acc += std::exp(kImag * ph / eps) * u * phi.interpolate(y) *
               quad.mollifier.eval(eta) * cell;
      }
      acc /= 2.0 * kPi * eps;
      CHECK(std::abs(out.data[xi] - acc) <= 1e-12 * (1.0 + std::abs(acc)));
    }
  }
}

TEST_CASE("identity reconstruction at the pinned settings") {
  const double eps = 0.05;
  const auto phi = coherent_state(kAxes1024, eps, RVec::Zero(1), RVec::Zero(1));
  const auto bundle =
      integrated_bundle("free", 0.0, 0.0, 0.0, 4.0, 4.0, 0.05,
                        SpreadingMatrix::identity(1));
  const QuadratureSpec quad = QuadratureSpec::match(bundle);
  const auto out =
      apply_fio(bundle, 0, FIOSymbol::one(), phi, kAxes1024, quad, two_threads());
  CHECK(l2_distance(out, phi) <= 1e-3);
}

TEST_CASE("linearity and the zero input") {
  const auto bundle = closed_form_bundle(false, 0.4, -2.0, 2.0, -2.0, 2.0, 0.25);
  const QuadratureSpec quad = QuadratureSpec::match(bundle);
  const std::vector<GridAxis> axes{GridAxis{-6.0, 6.0, 128}};
  const double eps = 0.25;
  const auto phi1 = coherent_state(axes, eps, RVec::Zero(1), RVec::Constant(1, 0.4));
  const auto phi2 = coherent_state(axes, eps, RVec::Constant(1, 0.5), RVec::Zero(1));
  const Complex a{0.6, -1.1}, b{-0.4, 0.2};

  WavefunctionGrid combo(axes, eps);
  combo.data = a * phi1.data + b * phi2.data;
  const auto o1 = apply_fio(bundle, 0, FIOSymbol::hk(), phi1, axes, quad);
  const auto o2 = apply_fio(bundle, 0, FIOSymbol::hk(), phi2, axes, quad);
  const auto oc = apply_fio(bundle, 0, FIOSymbol::hk(), combo, axes, quad);
  const double gap =
      std::sqrt((oc.data - a * o1.data - b * o2.data).squaredNorm() *
                oc.cell_volume());
  CHECK(gap <= 1e-12 * (std::abs(a) + std::abs(b)));

  WavefunctionGrid zero(axes, eps);
  const auto oz = apply_fio(bundle, 0, FIOSymbol::one(), zero, axes, quad);
  CHECK(oz.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("harmonic propagation at quarter period matches the reference") {
  const double eps = 0.05, t = 0.5 * kPi;
  const double q0 = 1.0, p0 = 0.5;
  const std::vector<GridAxis> axes{GridAxis{-8.0, 8.0, 2048}};
  const auto phi = coherent_state(axes, eps, RVec::Constant(1, q0),
                                  RVec::Constant(1, p0));
  const auto bundle = integrated_bundle("harmonic", t, q0, p0, 2.1, 2.1, 0.018,
                                        SpreadingMatrix::identity(1));
  const QuadratureSpec quad = QuadratureSpec::match(bundle);
  const auto out =
      apply_fio(bundle, 1, FIOSymbol::hk(), phi, axes, quad, two_threads());
  const Potential v = make_potential("harmonic", {}, 1);
  const auto ref = split_step_propagate(v, phi, t, eps / 50.0);
  CHECK(l2_distance(out, ref) <= 2e-3);
}

TEST_CASE("a constant thawed field reproduces the frozen path exactly") {
  CMat th(1, 1);
  th(0, 0) = Complex{1.3, 0.2};
  const SpreadingMatrix frozen = SpreadingMatrix::constant(th);
  const SpreadingMatrix thawed = SpreadingMatrix::field(
      1, [th](const RVec&, const RVec&) { return th; },
      0.9 * RMat::Identity(1, 1));

  const double eps = 0.1;
  const auto phi = coherent_state(kAxes1024, eps, RVec::Zero(1), RVec::Zero(1));
  const auto b1 = integrated_bundle("harmonic", 0.7, 0.0, 0.0, 1.8, 1.8, 0.03, frozen);
  const auto b2 = integrated_bundle("harmonic", 0.7, 0.0, 0.0, 1.8, 1.8, 0.03, thawed);
  const auto o1 = apply_fio(b1, 1, FIOSymbol::hk(), phi, kAxes1024,
                            QuadratureSpec::match(b1), two_threads());
  const auto o2 = apply_fio(b2, 1, FIOSymbol::hk(), phi, kAxes1024,
                            QuadratureSpec::match(b2), two_threads());
  CHECK(l2_distance(o1, o2) <= 1e-12);
}

TEST_CASE("rescaling identity across flows and eps") {
  // Identity flow: both sides are the identity.
  {
    const auto bundle = integrated_bundle("free", 0.0, 0.0, 0.0, 3.0, 3.0, 0.04,
                                          SpreadingMatrix::identity(1));
    const auto phi = coherent_state(kAxes1024, 0.1, RVec::Zero(1), RVec::Zero(1));
    CHECK(rescaling_check(bundle, 0, FIOSymbol::one(), phi,
                          QuadratureSpec::match(bundle), two_threads()) <= 1e-10);
  }
  // Free flow, eps = 0.1.
  {
    const auto bundle = integrated_bundle("free", 0.5, 0.2, 0.6, 2.0, 2.0, 0.035,
                                          SpreadingMatrix::identity(1));
    const auto phi = coherent_state(kAxes1024, 0.1, RVec::Constant(1, 0.2),
                                    RVec::Constant(1, 0.6));
    CHECK(rescaling_check(bundle, 1, FIOSymbol::hk(), phi,
                          QuadratureSpec::match(bundle), two_threads()) <= 1e-3);
  }
  // Harmonic flow, eps = 0.2, with a mollifier in play.
  {
    const auto bundle = integrated_bundle("harmonic", 1.0, 0.2, 0.6, 2.8, 2.8,
                                          0.05, SpreadingMatrix::identity(1));
    const auto phi = coherent_state(kAxes1024, 0.2, RVec::Constant(1, 0.2),
                                    RVec::Constant(1, 0.6));
    CHECK(rescaling_check(bundle, 1, FIOSymbol::hk(), phi,
                          QuadratureSpec::match(bundle, Mollifier::gaussian(12.0)),
                          two_threads()) <= 1e-3);
  }
}

namespace {
struct GaussW {
  double yc, ec, sigma;
  Complex operator()(const RVec& y, const RVec& e) const {
    const double a = (y[0] - yc) / sigma, b = (e[0] - ec) / sigma;
    return Complex{std::exp(-0.5 * (a * a + b * b)), 0.0};
  }
  double dy(const RVec& y, const RVec& e) const {
    return -((y[0] - yc) / (sigma * sigma)) * (*this)(y, e).real();
  }
  double deta(const RVec& y, const RVec& e) const {
    return -((e[0] - ec) / (sigma * sigma)) * (*this)(y, e).real();
  }
};
}  // namespace

TEST_CASE("integration by parts in eta: closed form and lattice stencils") {
  const double eps = 0.1;
  const GaussW w{0.6, 0.4, 0.5};
  IppForms forms;
  forms.V = [](const RVec&, const RVec&) { return CVec::Ones(1).eval(); };
  forms.w = [w](const RVec& y, const RVec& e) { return w(y, e); };
  forms.closed_rhs = [w](const TrajectoryState& st, const RVec& y, const RVec& e) {
    return w.deta(y, e) / st.prefactor()(0, 0);
  };

  const auto phi = coherent_state(kAxes1024, eps, RVec::Constant(1, 0.6),
                                  RVec::Constant(1, 0.4));
  const auto bundle = integrated_bundle("harmonic", 0.8, 0.6, 0.4, 2.6, 2.6,
                                        0.045, SpreadingMatrix::identity(1));
  const QuadratureSpec quad = QuadratureSpec::match(bundle);
  const double closed = ipp_residual(bundle, 1, forms, phi, quad, two_threads());
  CHECK(closed <= 1e-4);

  IppForms fd = forms;
  fd.closed_rhs = nullptr;
  const double stencil = ipp_residual(bundle, 1, fd, phi, quad, two_threads());
  CHECK(stencil <= 2e-4);

  // w == 1 on the identity flow: both sides vanish by odd-moment symmetry.
  IppForms trivial;
  trivial.V = forms.V;
  trivial.w = [](const RVec&, const RVec&) { return Complex{1.0, 0.0}; };
  trivial.closed_rhs = [](const TrajectoryState&, const RVec&, const RVec&) {
    return Complex{0.0, 0.0};
  };
  const auto b0 = integrated_bundle("free", 0.0, 0.0, 0.0, 3.0, 3.0, 0.05,
                                    SpreadingMatrix::identity(1));
  const auto phi0 = coherent_state(kAxes1024, eps, RVec::Zero(1), RVec::Zero(1));
  CHECK(ipp_residual(b0, 0, trivial, phi0, QuadratureSpec::match(b0),
                     two_threads()) <= 1e-6);
}

TEST_CASE("integration by parts in eta with polynomial growth and mollifier") {
  // Free flow, V = 1, w = eta: div_eta[eta / Y] = 1 / Y with constant Y.
  const double eps = 0.1;
  IppForms forms;
  forms.V = [](const RVec&, const RVec&) { return CVec::Ones(1).eval(); };
  forms.w = [](const RVec&, const RVec& e) { return Complex{e[0], 0.0}; };
  forms.closed_rhs = [](const TrajectoryState& st, const RVec&, const RVec&) {
    return 1.0 / st.prefactor()(0, 0);
  };
  const auto phi = coherent_state(kAxes1024, eps, RVec::Zero(1),
                                  RVec::Constant(1, 0.5));
  const auto bundle = integrated_bundle("free", 0.5, 0.0, 0.5, 2.0, 2.0, 0.035,
                                        SpreadingMatrix::identity(1));
  const double r = ipp_residual(bundle, 1, forms, phi,
                                QuadratureSpec::match(bundle, Mollifier::gaussian(8.0)),
                                two_threads());
  CHECK(r <= 1e-3);
}

TEST_CASE("eta-weight identity (second IPP lemma)") {
  const double eps = 0.1;
  // Identity flow with V = 1, w == 1: the divergence symbol vanishes and
  // the whole right side is the gradient term.
  {
    IppForms forms;
    forms.V = [](const RVec&, const RVec&) { return CVec::Ones(1).eval(); };
    forms.w = [](const RVec&, const RVec&) { return Complex{1.0, 0.0}; };
    forms.closed_rhs2 = [](const TrajectoryState&, const RVec&, const RVec&) {
      return Complex{0.0, 0.0};
    };
    const auto bundle = integrated_bundle("free", 0.0, 0.0, 0.3, 2.2, 2.2, 0.035,
                                          SpreadingMatrix::identity(1));
    const auto phi = coherent_state(kAxes1024, eps, RVec::Zero(1),
                                    RVec::Constant(1, 0.3));
    CHECK(ipp2_residual(bundle, 0, forms, phi, QuadratureSpec::match(bundle),
                        two_threads()) <= 1e-3);

    WavefunctionGrid zero(kAxes1024, eps);
    CHECK(ipp2_residual(bundle, 0, forms, zero, QuadratureSpec::match(bundle),
                        two_threads()) == 0.0);
  }
  // Harmonic flow with a smooth localized w, closed form and stencils.
  {
    const GaussW w{0.5, 0.4, 0.5};
    IppForms forms;
    forms.V = [](const RVec&, const RVec&) { return CVec::Ones(1).eval(); };
    forms.w = [w](const RVec& y, const RVec& e) { return w(y, e); };
    forms.closed_rhs2 = [w](const TrajectoryState& st, const RVec& y,
                            const RVec& e) {
      const Complex a = eta_elimination_matrix(st.F, st.theta)(0, 0);
      return Complex{w.dy(y, e), 0.0} - w.deta(y, e) * a;
    };
    const auto bundle = integrated_bundle("harmonic", 0.5, 0.5, 0.4, 2.4, 2.4,
                                          0.04, SpreadingMatrix::identity(1));
    const auto phi = coherent_state(kAxes1024, eps, RVec::Constant(1, 0.5),
                                    RVec::Constant(1, 0.4));
    const QuadratureSpec quad = QuadratureSpec::match(bundle);
    CHECK(ipp2_residual(bundle, 1, forms, phi, quad, two_threads()) <= 1e-3);

    IppForms fd = forms;
    fd.closed_rhs2 = nullptr;
    CHECK(ipp2_residual(bundle, 1, fd, phi, quad, two_threads()) <= 1e-3);
  }
}

TEST_CASE("mollified evaluations converge to the bare one") {
  const double eps = 0.1;
  const auto phi = coherent_state(kAxes1024, eps, RVec::Zero(1), RVec::Zero(1));
  const auto bundle = integrated_bundle("free", 0.0, 0.0, 0.0, 2.5, 2.5, 0.04,
                                        SpreadingMatrix::identity(1));
  const QuadratureSpec bare = QuadratureSpec::match(bundle);
  const auto ref = apply_fio(bundle, 0, FIOSymbol::one(), phi, kAxes1024, bare,
                             two_threads());
  QuadratureSpec q16 = bare;
  q16.mollifier = Mollifier::gaussian(16.0);
  const auto m16 = apply_fio(bundle, 0, FIOSymbol::one(), phi, kAxes1024, q16,
                             two_threads());
  CHECK(l2_distance(ref, m16) <= 1e-8);

  WavefunctionGrid zero(kAxes1024, eps);
  const auto diffs = mollifier_independence(bundle, 0, FIOSymbol::one(), zero,
                                            bare, {2.0, 4.0}, two_threads());
  CHECK(diffs[0] == 0.0);
  CHECK(diffs[1] == 0.0);
}

TEST_CASE("empirical operator norm: identity flow is unitary") {
  const auto bundle = integrated_bundle("free", 0.0, 0.0, 0.0, 3.2, 3.2, 0.04,
                                        SpreadingMatrix::identity(1));
  const auto scan = empirical_operator_norm(bundle, 0, FIOSymbol::one(),
                                            kAxes1024, 0.05, 5, 99,
                                            QuadratureSpec::match(bundle),
                                            two_threads());
  CHECK(scan.min_ratio >= 1.0 - 1e-6);
  CHECK(scan.max_ratio <= 1.0 + 1e-6);
}

TEST_CASE("quadrature self-consistency under halving") {
  const double eps = 0.1;
  const auto phi = coherent_state(kAxes1024, eps, RVec::Constant(1, 0.4),
                                  RVec::Constant(1, 0.3));
  const auto coarse = integrated_bundle("harmonic", 0.9, 0.4, 0.3, 2.0, 2.0,
                                        0.05, SpreadingMatrix::identity(1));
  const auto fine = integrated_bundle("harmonic", 0.9, 0.4, 0.3, 2.0, 2.0,
                                      0.025, SpreadingMatrix::identity(1));
  const auto oc = apply_fio(coarse, 1, FIOSymbol::hk(), phi, kAxes1024,
                            QuadratureSpec::match(coarse), two_threads());
  const auto of = apply_fio(fine, 1, FIOSymbol::hk(), phi, kAxes1024,
                            QuadratureSpec::match(fine), two_threads());
  CHECK(l2_distance(oc, of) <= 1e-4);
}

TEST_CASE("coverage warnings and structural errors") {
  const auto bundle = integrated_bundle("free", 0.0, 0.0, 0.0, 0.4, 0.4, 0.05,
                                        SpreadingMatrix::identity(1));
  const QuadratureSpec quad = QuadratureSpec::match(bundle);
  const auto phi = coherent_state(kAxes1024, 0.1, RVec::Constant(1, 1.5),
                                  RVec::Zero(1));  // mass outside the tiny box
  std::vector<std::string> warnings;
  FioOptions opt;
  opt.threads = 1;
  opt.warnings = &warnings;
  (void)apply_fio(bundle, 0, FIOSymbol::one(), phi, kAxes1024, quad, opt);
  CHECK(!warnings.empty());

  QuadratureSpec wrong = quad;
  wrong.dy[0] *= 2.0;
  CHECK_THROWS_AS(apply_fio(bundle, 0, FIOSymbol::one(), phi, kAxes1024, wrong, {}),
                  GridMismatchError);
  CHECK_THROWS_AS(apply_fio(bundle, 0, FIOSymbol::per_node(CVec::Zero(3)), phi,
                            kAxes1024, quad, {}),
                  InvalidInputError);
  CHECK_THROWS_AS(empirical_operator_norm(bundle, 0, FIOSymbol::one(), kAxes1024,
                                          0.1, 3, 1, quad, {}),
                  InvalidInputError);
}

TEST_CASE("two-dimensional identity reconstruction (smoke)") {
  const double eps = 0.5;
  const std::vector<GridAxis> axes{GridAxis{-5.0, 5.0, 32}, GridAxis{-5.0, 5.0, 32}};
  const auto phi = coherent_state(axes, eps, RVec::Zero(2), RVec::Zero(2));
  const Potential v = make_potential("free", {}, 2);
  const auto bundle = integrate_bundle(
      v, RVec::Constant(2, -2.1), RVec::Constant(2, 2.1),
      RVec::Constant(2, -2.1), RVec::Constant(2, 2.1), RVec::Constant(2, 0.2),
      RVec::Constant(2, 0.2), SpreadingMatrix::identity(2), {0.0}, {}, 2);
  const auto out = apply_fio(bundle, 0, FIOSymbol::one(), phi, axes,
                             QuadratureSpec::match(bundle), two_threads());
  CHECK(l2_distance(out, phi) <= 0.1);
}
