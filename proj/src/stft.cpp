#include "hkprop/stft.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "hkprop/errors.hpp"
#include "hkprop/parallel.hpp"
#include "hkprop/symplectic.hpp"

namespace hkprop {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<Index> axis_sizes(const std::vector<GridAxis>& axes) {
  std::vector<Index> n;
  n.reserve(axes.size());
  for (const auto& a : axes) n.push_back(a.n);
  return n;
}

RVec decode(const std::vector<Index>& sizes, Index flat,
            const std::function<double(Index ax, Index i)>& coord) {
  const Index d = static_cast<Index>(sizes.size());
  RVec x(d);
  for (Index ax = d - 1; ax >= 0; --ax) {
    x[ax] = coord(ax, flat % sizes[ax]);
    flat /= sizes[ax];
  }
  return x;
}

}  // namespace

Window Window::generalized(
    CMat theta,
    std::function<Complex(const RVec&, const RVec&, const RVec&)> gtilde) {
  check_admissible(theta);
  Window w;
  w.kind = Kind::Generalized;
  w.theta = std::move(theta);
  w.gtilde = std::move(gtilde);
  return w;
}

Index StftResult::y_count() const {
  Index n = 1;
  for (const auto& a : y_axes) n *= a.n;
  return n;
}

Index StftResult::eta_count() const {
  Index n = 1;
  for (const auto& e : eta_values) n *= e.size();
  return n;
}

RVec StftResult::y_at(Index y_flat) const {
  return decode(axis_sizes(y_axes), y_flat, [&](Index ax, Index i) {
    return y_axes[ax].min + i * y_axes[ax].delta();
  });
}

RVec StftResult::eta_at(Index eta_flat) const {
  std::vector<Index> sizes;
  for (const auto& e : eta_values) sizes.push_back(e.size());
  return decode(sizes, eta_flat,
                [&](Index ax, Index i) { return eta_values[ax][i]; });
}

double StftResult::cell_volume() const {
  double v = 1.0;
  for (const auto& a : y_axes) v *= a.delta();
  for (const auto& a : y_axes) v *= 2.0 * kPi / (a.max - a.min);
  return v;
}

double StftResult::l2_norm() const {
  return std::sqrt(data.squaredNorm() * cell_volume());
}

namespace {

StftResult make_result_shell(const WavefunctionGrid& f) {
  StftResult r;
  r.d = f.d;
  r.y_axes = f.axes;
  for (const auto& ax : f.axes) r.eta_values.push_back(fft_wavenumbers(ax));
  r.data = CVec::Zero(r.y_count() * r.eta_count());
  return r;
}

}  // namespace

StftResult stft(const WavefunctionGrid& f, const Window& g, int threads) {
  if (g.kind != Window::Kind::Plain)
    throw InvalidInputError("stft expects a plain window; use stft_generalized");
  if (g.plain.size() != f.size())
    throw GridMismatchError("window samples must live on the signal grid");

  StftResult r = make_result_shell(f);
  const Index n_eta = r.eta_count();
  const double pref =
      f.cell_volume() * std::pow(2.0 * kPi, -0.5 * static_cast<double>(f.d));
  const auto sizes = axis_sizes(f.axes);

  // g(x - y) is read at the true displacement, wrapped periodically; this
  // needs the origin to sit on the grid lattice.
  std::vector<Index> origin(f.d);
  for (Index ax = 0; ax < f.d; ++ax) {
    const double m0 = -f.axes[ax].min / f.axes[ax].delta();
    if (std::abs(m0 - std::round(m0)) > 1e-9)
      throw InvalidInputError(
          "plain stft requires x = 0 on the periodic grid lattice");
    origin[ax] = ((static_cast<Index>(std::llround(m0)) % sizes[ax]) + sizes[ax]) %
                 sizes[ax];
  }

  parallel_for(static_cast<std::size_t>(r.y_count()), threads, [&](std::size_t ym) {
    std::vector<Index> yidx(f.d);
    {
      Index rem = static_cast<Index>(ym);
      for (Index ax = f.d - 1; ax >= 0; --ax) {
        yidx[ax] = rem % sizes[ax];
        rem /= sizes[ax];
      }
    }
    CVec h(f.size());
    for (Index j = 0; j < f.size(); ++j) {
      Index rem = j, shifted = 0;
      for (Index ax = f.d - 1, mul = 1; ax >= 0; --ax) {
        const Index i = rem % sizes[ax];
        rem /= sizes[ax];
        const Index s = (i - yidx[ax] + origin[ax] + 2 * sizes[ax]) % sizes[ax];
        shifted += s * mul;
        mul *= sizes[ax];
      }
      h[j] = f.data[j] * std::conj(g.plain[shifted]);
    }
    fft_all(h, f.axes, true);
    // e^{-i eta x} picks up e^{-i eta x_min} relative to the raw DFT.
    for (Index k = 0; k < n_eta; ++k) {
      const RVec eta = r.eta_at(k);
      double ph = 0.0;
      for (Index ax = 0; ax < f.d; ++ax) ph -= eta[ax] * f.axes[ax].min;
      r.data[static_cast<Index>(ym) * n_eta + k] =
          pref * h[k] * Complex{std::cos(ph), std::sin(ph)};
    }
  });
  return r;
}

StftResult stft_generalized(const WavefunctionGrid& f, const Window& g,
                            int threads) {
  if (g.kind != Window::Kind::Generalized)
    throw InvalidInputError("stft_generalized expects a generalized window");

  StftResult r = make_result_shell(f);
  const Index n_eta = r.eta_count();
  const double pref =
      f.cell_volume() * std::pow(2.0 * kPi, -0.5 * static_cast<double>(f.d));

  parallel_for(static_cast<std::size_t>(r.y_count()), threads, [&](std::size_t ym) {
    const RVec y = r.y_at(static_cast<Index>(ym));
    for (Index k = 0; k < n_eta; ++k) {
      const RVec eta = r.eta_at(k);
      Complex acc{0.0, 0.0};
      for (Index j = 0; j < f.size(); ++j) {
        const RVec x = f.point(j);
        const RVec u = x - y;
        const CVec cu = u.cast<Complex>();
        const Complex gauss = std::exp(-0.5 * cu.dot(g.theta * cu));
        const Complex win = gauss * g.gtilde(u, y, eta);
        const double ph = -eta.dot(x);
        acc += f.data[j] * std::conj(win) * Complex{std::cos(ph), std::sin(ph)};
      }
      r.data[static_cast<Index>(ym) * n_eta + k] = pref * acc;
    }
  });
  return r;
}

Complex p_delta(const RVec& xi, const std::vector<int>& delta) {
  if (static_cast<Index>(delta.size()) != xi.size())
    throw InvalidInputError("p_delta: delta length must match xi");
  Complex prod{1.0, 0.0};
  for (Index j = 0; j < xi.size(); ++j) {
    if (delta[j] != 0 && delta[j] != 1)
      throw InvalidInputError("p_delta: delta entries must be 0 or 1");
    const Complex base = 1.0 / Complex{1.0, -xi[j]};
    prod *= delta[j] ? base * base : base;
  }
  return prod;
}

void write_stft_csv(const StftResult& r, std::ostream& os) {
  os << "# hkprop-stft-v1\n";
  for (Index j = 0; j < r.d; ++j) os << "y" << j << ",";
  for (Index j = 0; j < r.d; ++j) os << "eta" << j << ",";
  os << "re,im\n";
  char buf[64];
  const auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof(buf), "%.17g%c", v, sep);
    os << buf;
  };
  const Index n_eta = r.eta_count();
  for (Index m = 0; m < r.y_count(); ++m) {
    const RVec y = r.y_at(m);
    for (Index k = 0; k < n_eta; ++k) {
      const RVec eta = r.eta_at(k);
      for (Index j = 0; j < r.d; ++j) put(y[j], ',');
      for (Index j = 0; j < r.d; ++j) put(eta[j], ',');
      const Complex v = r.data[m * n_eta + k];
      put(v.real(), ',');
      put(v.imag(), '\n');
    }
  }
}

}  // namespace hkprop
