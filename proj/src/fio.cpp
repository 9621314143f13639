#include "hkprop/fio.hpp"

#include <cmath>
#include <random>

#include "hkprop/errors.hpp"
#include "hkprop/parallel.hpp"

namespace hkprop {

namespace {

constexpr double kPi = 3.14159265358979323846;

/// C^infinity step: 0 for u <= 0, 1 for u >= 1.
double smooth_step(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  const double a = std::exp(-1.0 / u);
  const double b = std::exp(-1.0 / (1.0 - u));
  return a / (a + b);
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

double Mollifier::eval(const RVec& eta) const {
  if (kind == Kind::None) return 1.0;
  const double v = eta.norm() / lambda;
  if (v <= 0.5) return 1.0;
  switch (kind) {
    case Kind::Gaussian:
      return std::exp(-2.0 * (v - 0.5) * (v - 0.5) * smooth_step(2.0 * v - 1.0));
    case Kind::Bump:
      return 1.0 - smooth_step(2.0 * v - 1.0);
    default:
      return 1.0;
  }
}

QuadratureSpec QuadratureSpec::match(const TrajectoryGridBundle& b,
                                     Mollifier m) {
  QuadratureSpec q;
  q.y_min = b.y_min;
  q.y_max = b.y_max;
  q.eta_min = b.eta_min;
  q.eta_max = b.eta_max;
  q.dy = b.dy;
  q.deta = b.deta;
  q.mollifier = m;
  return q;
}

void QuadratureSpec::require_matches(const TrajectoryGridBundle& b) const {
  const auto close = [](const RVec& a, const RVec& c) {
    return a.size() == c.size() && (a - c).cwiseAbs().maxCoeff() < 1e-9;
  };
  if (!close(y_min, b.y_min) || !close(y_max, b.y_max) ||
      !close(eta_min, b.eta_min) || !close(eta_max, b.eta_max) ||
      !close(dy, b.dy) || !close(deta, b.deta))
    throw GridMismatchError("quadrature spec does not match the bundle lattice");
}

Complex fio_phase(const RVec& x, const TrajectoryState& node) {
  const RVec dx = x - node.X;
  const CVec cdx = dx.cast<Complex>();
  const Complex quad = cdx.dot(node.theta * cdx);  // dot conjugates; dx real
  return Complex{node.S + node.Xi.dot(dx), 0.0} + 0.5 * kImag * quad;
}

namespace {

/// Node-major scratch for the oscillatory sum.
struct NodeTable {
  Index d = 1;
  Index n = 0;
  std::vector<double> X, Xi, S, re_th, im_th;  // d, d, 1, d*d, d*d per node
  std::vector<Complex> coef;                   // u-independent weight
  std::vector<double> y, eta;                  // lattice coordinates
  bool poly = false;
  std::function<CVec(const RVec&, const RVec&, const RVec&)> poly_V;
};

NodeTable build_table(const TrajectoryGridBundle& bundle, std::size_t ti,
                      const FIOSymbol& symbol, const WavefunctionGrid& phi,
                      const QuadratureSpec& quad) {
  if (ti >= bundle.states.size())
    throw InvalidInputError("bundle has no states at the requested time index");
  quad.require_matches(bundle);
  if (phi.d != bundle.d)
    throw GridMismatchError("wavefunction and bundle dimension differ");
  if (symbol.kind == FIOSymbol::Kind::PerNode &&
      symbol.node_values.size() != bundle.node_count())
    throw InvalidInputError("per-node symbol length does not match the lattice");

  const Index d = bundle.d;
  const Index n = bundle.node_count();
  const Index n_eta = bundle.eta_count();
  const double eps = phi.eps;
  const double norm = bundle.cell_volume() / std::pow(2.0 * kPi * eps, d);

  NodeTable t;
  t.d = d;
  t.n = n;
  t.X.resize(n * d);
  t.Xi.resize(n * d);
  t.S.resize(n);
  t.re_th.resize(n * d * d);
  t.im_th.resize(n * d * d);
  t.coef.resize(n);
  t.y.resize(n * d);
  t.eta.resize(n * d);
  t.poly = symbol.kind == FIOSymbol::Kind::PolynomialTest;
  t.poly_V = symbol.poly_V;

  const auto& states = bundle.states[ti];
  for (Index node = 0; node < n; ++node) {
    const auto& st = states[node];
    const RVec y = bundle.y_at(node / n_eta);
    const RVec eta = bundle.eta_at(node % n_eta);
    for (Index j = 0; j < d; ++j) {
      t.X[node * d + j] = st.X[j];
      t.Xi[node * d + j] = st.Xi[j];
      t.y[node * d + j] = y[j];
      t.eta[node * d + j] = eta[j];
    }
    t.S[node] = st.S;
    for (Index j = 0; j < d; ++j)
      for (Index k = 0; k < d; ++k) {
        t.re_th[(node * d + j) * d + k] = st.theta(j, k).real();
        t.im_th[(node * d + j) * d + k] = st.theta(j, k).imag();
      }

    Complex u{1.0, 0.0};
    switch (symbol.kind) {
      case FIOSymbol::Kind::One:
        break;
      case FIOSymbol::Kind::HK:
        u = st.u0;
        break;
      case FIOSymbol::Kind::PerNode:
        u = symbol.node_values[node];
        break;
      case FIOSymbol::Kind::PolynomialTest:
        u = symbol.poly_w ? symbol.poly_w(y, eta) : Complex{1.0, 0.0};
        break;
    }
    t.coef[node] = u * phi.interpolate(y) * quad.mollifier.eval(eta) * norm;
  }
  return t;
}

void coverage_warnings(const TrajectoryGridBundle& bundle, std::size_t ti,
                       const WavefunctionGrid& phi,
                       const std::vector<GridAxis>& out_axes,
                       const QuadratureSpec& quad, const FioOptions& opt) {
  if (!opt.warnings) return;
  const auto pos = position_extent(phi);
  const auto mom = momentum_extent(phi);
  for (Index ax = 0; ax < bundle.d; ++ax) {
    if (pos[ax].first < quad.y_min[ax] || pos[ax].second > quad.y_max[ax])
      opt.warnings->push_back("quadrature y-box does not cover the wavefunction support");
    if (mom[ax].first < quad.eta_min[ax] || mom[ax].second > quad.eta_max[ax])
      opt.warnings->push_back("quadrature eta-box does not cover the momentum content");
  }
  const auto& states = bundle.states[ti];
  RVec xlo = states.front().X, xhi = states.front().X;
  for (const auto& st : states) {
    xlo = xlo.cwiseMin(st.X);
    xhi = xhi.cwiseMax(st.X);
  }
  for (Index ax = 0; ax < bundle.d; ++ax) {
    const double hi = out_axes[ax].min + (out_axes[ax].n - 1) * out_axes[ax].delta();
    if (xlo[ax] < out_axes[ax].min || xhi[ax] > hi)
      opt.warnings->push_back("flow transports the lattice outside the output grid");
  }
}

}  // namespace

WavefunctionGrid apply_fio(const TrajectoryGridBundle& bundle,
                           std::size_t time_index, const FIOSymbol& symbol,
                           const WavefunctionGrid& phi,
                           const std::vector<GridAxis>& out_axes,
                           const QuadratureSpec& quad, const FioOptions& opt) {
  const NodeTable t = build_table(bundle, time_index, symbol, phi, quad);
  coverage_warnings(bundle, time_index, phi, out_axes, quad, opt);

  WavefunctionGrid out(out_axes, phi.eps);
  const double inv_eps = 1.0 / phi.eps;
  const Index d = t.d;

  parallel_for(static_cast<std::size_t>(out.size()), opt.threads, [&](std::size_t xi) {
    const RVec xv = out.point(static_cast<Index>(xi));
    double x[8];
    for (Index j = 0; j < d; ++j) x[j] = xv[j];

    PairwiseAccumulator acc;
    double dx[8];
    for (Index node = 0; node < t.n; ++node) {
      const Complex c = t.coef[node];
      if (c == Complex{0.0, 0.0}) continue;
      double lin = 0.0;
      for (Index j = 0; j < d; ++j) {
        dx[j] = x[j] - t.X[node * d + j];
        lin += t.Xi[node * d + j] * dx[j];
      }
      double qre = 0.0, qim = 0.0;
      for (Index j = 0; j < d; ++j) {
        const double* re_row = &t.re_th[(node * d + j) * d];
        const double* im_row = &t.im_th[(node * d + j) * d];
        double sre = 0.0, sim = 0.0;
        for (Index k = 0; k < d; ++k) {
          sre += re_row[k] * dx[k];
          sim += im_row[k] * dx[k];
        }
        qre += dx[j] * sre;
        qim += dx[j] * sim;
      }
      // i Phi/eps = i (S + Xi.dx - qim/2)/eps - qre/(2 eps)
      const double mag = std::exp(-0.5 * qre * inv_eps);
      const double ph = (t.S[node] + lin - 0.5 * qim) * inv_eps;
      Complex term = c * (mag * Complex{std::cos(ph), std::sin(ph)});
      if (t.poly) {
        Eigen::Map<const RVec> yv(&t.y[node * d], d);
        Eigen::Map<const RVec> ev(&t.eta[node * d], d);
        const CVec V = t.poly_V(xv, yv, ev);
        Complex dot{0.0, 0.0};
        for (Index j = 0; j < d; ++j) dot += V[j] * dx[j];
        term *= dot;
      }
      acc.add(term);
    }
    out.data[static_cast<Index>(xi)] = acc.total();
  });
  return out;
}

double rescaling_check(const TrajectoryGridBundle& bundle,
                       std::size_t time_index, const FIOSymbol& symbol,
                       const WavefunctionGrid& phi, const QuadratureSpec& quad,
                       const FioOptions& opt) {
  const double eps = phi.eps;
  const double r = std::sqrt(eps);
  const WavefunctionGrid direct =
      apply_fio(bundle, time_index, symbol, phi, phi.axes, quad, opt);

  // T phi (y) = eps^{d/4} phi(sqrt(eps) y): same samples on the y/r grid.
  std::vector<GridAxis> sc_axes = phi.axes;
  for (auto& ax : sc_axes) {
    ax.min /= r;
    ax.max /= r;
  }
  WavefunctionGrid phi_s(sc_axes, 1.0);
  phi_s.data = phi.data * std::pow(eps, 0.25 * static_cast<double>(phi.d));

  // kappa^(eps)(y, eta) = kappa(r y, r eta)/r reuses the trajectory data of
  // the original lattice at rescaled coordinates; the Jacobian, spreading
  // and prefactor are unchanged, the action scales by 1/eps.
  TrajectoryGridBundle b = bundle;
  b.y_min /= r;
  b.y_max /= r;
  b.eta_min /= r;
  b.eta_max /= r;
  b.dy /= r;
  b.deta /= r;
  for (auto& snap : b.states)
    for (auto& st : snap) {
      st.X /= r;
      st.Xi /= r;
      st.S /= eps;
    }

  QuadratureSpec q = QuadratureSpec::match(b, quad.mollifier);
  if (q.mollifier.kind != Mollifier::Kind::None) q.mollifier.lambda /= r;

  FIOSymbol sym = symbol;
  if (symbol.kind == FIOSymbol::Kind::PolynomialTest) {
    // u^(eps)(x, y, eta) = u(r x, r y, r eta)
    auto V = symbol.poly_V;
    auto w = symbol.poly_w;
    sym.poly_V = [V, r](const RVec& x, const RVec& y, const RVec& e) {
      return V((r * x).eval(), (r * y).eval(), (r * e).eval());
    };
    if (w)
      sym.poly_w = [w, r](const RVec& y, const RVec& e) {
        return w((r * y).eval(), (r * e).eval());
      };
  }

  const WavefunctionGrid out_s =
      apply_fio(b, time_index, sym, phi_s, phi_s.axes, q, opt);

  // Undo the unitary rescaling: g(x) = eps^{-d/4} out_s(x / r), which is an
  // exact per-sample correspondence between the two grids.
  WavefunctionGrid back = direct;
  back.data = out_s.data * std::pow(eps, -0.25 * static_cast<double>(phi.d));
  return l2_distance(direct, back);
}

namespace {

/// 4th-order central divergence of a node-major vector field over the
/// lattice, along the eta axes (over_eta) or the y axes. Nodes whose
/// stencil leaves the lattice must carry negligible field values.
CVec lattice_divergence(const TrajectoryGridBundle& bundle, const CMat& field,
                        bool over_eta) {
  const Index d = bundle.d;
  const Index n = bundle.node_count();
  const Index n_eta = bundle.eta_count();
  const double field_max = field.cwiseAbs().maxCoeff();
  CVec div = CVec::Zero(n);

  // Decompose the relevant flat index into per-axis indices.
  const auto& counts = over_eta ? bundle.neta : bundle.ny;
  const RVec& h = over_eta ? bundle.deta : bundle.dy;

  std::vector<Index> strides(d, 1);
  for (Index ax = d - 2; ax >= 0; --ax)
    strides[ax] = strides[ax + 1] * counts[ax + 1];

  for (Index node = 0; node < n; ++node) {
    const Index y_flat = node / n_eta;
    const Index e_flat = node % n_eta;
    Index part = over_eta ? e_flat : y_flat;
    Complex acc{0.0, 0.0};
    bool edge = false;
    for (Index ax = 0; ax < d; ++ax) {
      const Index i = (part / strides[ax]) % counts[ax];
      if (i < 2 || i >= counts[ax] - 2) {
        edge = true;
        continue;
      }
      const auto at = [&](Index shift) {
        const Index p = over_eta ? node + shift * strides[ax]
                                 : node + shift * strides[ax] * n_eta;
        return field(p, ax);
      };
      acc += (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h[ax]);
    }
    if (edge) {
      if (field.row(node).cwiseAbs().maxCoeff() > 1e-10 * field_max)
        throw ShrinkDomainError(
            "divergence stencil hits the lattice boundary on a non-negligible field");
      div[node] = Complex{0.0, 0.0};
    } else {
      div[node] = acc;
    }
  }
  return div;
}

double residual_norm(const WavefunctionGrid& lhs, const WavefunctionGrid& rhs,
                     double eps, double phi_norm) {
  const double diff = l2_distance(lhs, rhs);
  const double scale =
      std::max({lhs.l2_norm(), rhs.l2_norm(), eps * phi_norm, 1e-300});
  return diff / scale;
}

}  // namespace

double ipp_residual(const TrajectoryGridBundle& bundle, std::size_t time_index,
                    const IppForms& forms, const WavefunctionGrid& phi,
                    const QuadratureSpec& quad, const FioOptions& opt) {
  const Index d = bundle.d;
  const Index n = bundle.node_count();
  const Index n_eta = bundle.eta_count();
  const double eps = phi.eps;
  const auto& states = bundle.states[time_index];

  auto V = forms.V;
  auto w = forms.w;
  const FIOSymbol lhs_sym = FIOSymbol::polynomial_test(
      [V](const RVec&, const RVec& y, const RVec& e) { return V(y, e); }, w);
  const WavefunctionGrid lhs =
      apply_fio(bundle, time_index, lhs_sym, phi, phi.axes, quad, opt);

  CVec rhs_sym(n);
  if (forms.closed_rhs) {
    for (Index node = 0; node < n; ++node)
      rhs_sym[node] = forms.closed_rhs(states[node], bundle.y_at(node / n_eta),
                                       bundle.eta_at(node % n_eta));
  } else {
    CMat field(n, d);
    for (Index node = 0; node < n; ++node) {
      const auto& st = states[node];
      const RVec y = bundle.y_at(node / n_eta);
      const RVec eta = bundle.eta_at(node % n_eta);
      const CMat yt_inv =
          prefactor_matrix(st.F, st.theta).transpose().partialPivLu().inverse();
      field.row(node) = (w(y, eta) * (yt_inv * V(y, eta))).transpose();
    }
    rhs_sym = lattice_divergence(bundle, field, /*over_eta=*/true);
  }

  WavefunctionGrid rhs = apply_fio(bundle, time_index,
                                   FIOSymbol::per_node(rhs_sym), phi, phi.axes,
                                   quad, opt);
  rhs.data *= kImag * eps;
  return residual_norm(lhs, rhs, eps, phi.l2_norm());
}

double ipp2_residual(const TrajectoryGridBundle& bundle, std::size_t time_index,
                     const IppForms& forms, const WavefunctionGrid& phi,
                     const QuadratureSpec& quad, const FioOptions& opt) {
  const Index d = bundle.d;
  const Index n = bundle.node_count();
  const Index n_eta = bundle.eta_count();
  const double eps = phi.eps;
  const auto& states = bundle.states[time_index];

  // LHS symbol (V.eta) w is x-independent.
  CVec lhs_sym(n);
  CMat wV(n, d);
  for (Index node = 0; node < n; ++node) {
    const RVec y = bundle.y_at(node / n_eta);
    const RVec eta = bundle.eta_at(node % n_eta);
    const CVec v = forms.V(y, eta);
    const Complex wv = forms.w(y, eta);
    lhs_sym[node] = v.transpose().dot(eta.cast<Complex>()) * wv;
    wV.row(node) = (wv * v).transpose();
  }
  const WavefunctionGrid lhs = apply_fio(bundle, time_index,
                                         FIOSymbol::per_node(lhs_sym), phi,
                                         phi.axes, quad, opt);

  CVec rhs_sym(n);
  if (forms.closed_rhs2) {
    for (Index node = 0; node < n; ++node)
      rhs_sym[node] = forms.closed_rhs2(states[node], bundle.y_at(node / n_eta),
                                        bundle.eta_at(node % n_eta));
  } else {
    CMat field_eta(n, d);
    for (Index node = 0; node < n; ++node) {
      const auto& st = states[node];
      const CMat a = eta_elimination_matrix(st.F, st.theta);
      field_eta.row(node) = (a.transpose() * wV.row(node).transpose()).transpose();
    }
    rhs_sym = lattice_divergence(bundle, wV, /*over_eta=*/false) -
              lattice_divergence(bundle, field_eta, /*over_eta=*/true);
  }

  WavefunctionGrid rhs = apply_fio(bundle, time_index,
                                   FIOSymbol::per_node(rhs_sym), phi, phi.axes,
                                   quad, opt);

  // Gradient term: the y-divergence also acts on the wavefunction factor.
  const auto grad = spectral_gradient(phi);
  for (Index j = 0; j < d; ++j) {
    const WavefunctionGrid gj =
        apply_fio(bundle, time_index, FIOSymbol::per_node(wV.col(j)), grad[j],
                  phi.axes, quad, opt);
    rhs.data += gj.data;
  }
  rhs.data *= -kImag * eps;
  return residual_norm(lhs, rhs, eps, phi.l2_norm());
}

std::vector<double> mollifier_independence(const TrajectoryGridBundle& bundle,
                                           std::size_t time_index,
                                           const FIOSymbol& symbol,
                                           const WavefunctionGrid& phi,
                                           const QuadratureSpec& quad,
                                           const std::vector<double>& lambdas,
                                           const FioOptions& opt) {
  std::vector<double> diffs;
  diffs.reserve(lambdas.size());
  for (const double lam : lambdas) {
    QuadratureSpec qg = quad;
    qg.mollifier = Mollifier::gaussian(lam);
    QuadratureSpec qb = quad;
    qb.mollifier = Mollifier::bump(lam);
    const auto g = apply_fio(bundle, time_index, symbol, phi, phi.axes, qg, opt);
    const auto b = apply_fio(bundle, time_index, symbol, phi, phi.axes, qb, opt);
    diffs.push_back(l2_distance(g, b));
  }
  return diffs;
}

OperatorNormScan empirical_operator_norm(const TrajectoryGridBundle& bundle,
                                         std::size_t time_index,
                                         const FIOSymbol& symbol,
                                         const std::vector<GridAxis>& phi_axes,
                                         double eps, int trials,
                                         std::uint64_t seed,
                                         const QuadratureSpec& quad,
                                         const FioOptions& opt) {
  if (trials < 1) throw InvalidInputError("trials must be >= 1");
  const Index d = bundle.d;
  const double pad = 5.0 * std::sqrt(eps);
  for (Index ax = 0; ax < d; ++ax)
    if (quad.y_max[ax] - quad.y_min[ax] <= 2.0 * pad ||
        quad.eta_max[ax] - quad.eta_min[ax] <= 2.0 * pad)
      throw InvalidInputError(
          "quadrature box too small to hold coherent states with a 5 sqrt(eps) margin");

  std::mt19937_64 rng(seed);
  OperatorNormScan scan{1e300, 0.0};
  for (int trial = 0; trial < trials; ++trial) {
    RVec q0(d), p0(d);
    for (Index ax = 0; ax < d; ++ax) {
      q0[ax] = quad.y_min[ax] + pad +
               uniform01(rng) * (quad.y_max[ax] - quad.y_min[ax] - 2.0 * pad);
      p0[ax] = quad.eta_min[ax] + pad +
               uniform01(rng) * (quad.eta_max[ax] - quad.eta_min[ax] - 2.0 * pad);
    }
    WavefunctionGrid phi = coherent_state(phi_axes, eps, q0, p0);
    phi.normalize();
    const WavefunctionGrid out =
        apply_fio(bundle, time_index, symbol, phi, phi_axes, quad, opt);
    const double ratio = out.l2_norm();
    scan.min_ratio = std::min(scan.min_ratio, ratio);
    scan.max_ratio = std::max(scan.max_ratio, ratio);
  }
  return scan;
}

}  // namespace hkprop
