#include "hkprop/wavegrid.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "hkprop/errors.hpp"

#include "json.hpp"

namespace hkprop {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr char kMagic[8] = {'W', 'F', 'G', 'R', 'I', 'D', '0', '1'};

bool is_pow2(Index n) { return n > 0 && (n & (n - 1)) == 0; }

void check_axes(const std::vector<GridAxis>& axes) {
  if (axes.empty()) throw InvalidInputError("grid needs at least one axis");
  for (const auto& ax : axes) {
    if (!(ax.max > ax.min)) throw InvalidInputError("grid axis must have max > min");
    if (!is_pow2(ax.n))
      throw InvalidInputError("grid axis length must be a power of two");
  }
}

}  // namespace

WavefunctionGrid::WavefunctionGrid(std::vector<GridAxis> ax, double eps_)
    : d(static_cast<Index>(ax.size())), axes(std::move(ax)), eps(eps_) {
  check_axes(axes);
  if (!(eps > 0.0) || eps > 1.0)
    throw InvalidInputError("eps must lie in (0, 1]");
  Index total = 1;
  for (const auto& a : axes) total *= a.n;
  data = CVec::Zero(total);
}

RVec WavefunctionGrid::point(Index flat) const {
  RVec x(d);
  for (Index ax = d - 1; ax >= 0; --ax) {
    const Index i = flat % axes[ax].n;
    flat /= axes[ax].n;
    x[ax] = axes[ax].min + i * axes[ax].delta();
  }
  return x;
}

double WavefunctionGrid::cell_volume() const {
  double v = 1.0;
  for (const auto& a : axes) v *= a.delta();
  return v;
}

double WavefunctionGrid::l2_norm() const {
  return std::sqrt(data.squaredNorm() * cell_volume());
}

void WavefunctionGrid::normalize() {
  const double n = l2_norm();
  if (n == 0.0) throw InvalidInputError("cannot normalize the zero function");
  data /= n;
}

Complex WavefunctionGrid::interpolate(const RVec& x) const {
  // Per-axis 4-point Lagrange weights, zero-padded outside the box.
  Index stride[8];
  Index base[8];
  double w[8][4];
  Index s = 1;
  for (Index ax = d - 1; ax >= 0; --ax) {
    stride[ax] = s;
    s *= axes[ax].n;
  }
  for (Index ax = 0; ax < d; ++ax) {
    const double t = (x[ax] - axes[ax].min) / axes[ax].delta();
    if (t < -1.0 || t > static_cast<double>(axes[ax].n)) return {0.0, 0.0};
    const double fl = std::floor(t);
    const double f = t - fl;
    base[ax] = static_cast<Index>(fl) - 1;
    // Lagrange basis on nodes {-1, 0, 1, 2} evaluated at f in [0, 1).
    w[ax][0] = -f * (f - 1.0) * (f - 2.0) / 6.0;
    w[ax][1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    w[ax][2] = -(f + 1.0) * f * (f - 2.0) / 2.0;
    w[ax][3] = (f + 1.0) * f * (f - 1.0) / 6.0;
  }
  Complex acc{0.0, 0.0};
  const Index combos = Index{1} << (2 * d);  // 4^d stencil points
  for (Index c = 0; c < combos; ++c) {
    double weight = 1.0;
    Index flat = 0;
    bool inside = true;
    Index cc = c;
    for (Index ax = 0; ax < d; ++ax) {
      const Index off = cc & 3;
      cc >>= 2;
      const Index idx = base[ax] + off;
      if (idx < 0 || idx >= axes[ax].n) {
        inside = false;
        break;
      }
      weight *= w[ax][off];
      flat += idx * stride[ax];
    }
    if (inside && weight != 0.0) acc += weight * data[flat];
  }
  return acc;
}

bool WavefunctionGrid::on_node(const RVec& x, Index& flat, double tol) const {
  flat = 0;
  for (Index ax = 0; ax < d; ++ax) {
    const double t = (x[ax] - axes[ax].min) / axes[ax].delta();
    const double r = std::round(t);
    if (std::abs(t - r) > tol) return false;
    const Index i = static_cast<Index>(r);
    if (i < 0 || i >= axes[ax].n) return false;
    flat = flat * axes[ax].n + i;
  }
  return true;
}

WavefunctionGrid coherent_state(std::vector<GridAxis> axes, double eps,
                                const RVec& q0, const RVec& p0) {
  WavefunctionGrid g(std::move(axes), eps);
  const double norm = std::pow(kPi * eps, -0.25 * static_cast<double>(g.d));
  for (Index i = 0; i < g.size(); ++i) {
    const RVec x = g.point(i);
    const RVec dx = x - q0;
    const double gauss = std::exp(-dx.squaredNorm() / (2.0 * eps));
    const double phase = p0.dot(dx) / eps;
    g.data[i] = norm * gauss * Complex{std::cos(phase), std::sin(phase)};
  }
  return g;
}

double l2_distance(const WavefunctionGrid& a, const WavefunctionGrid& b) {
  if (a.axes != b.axes || a.eps != b.eps)
    throw GridMismatchError("l2_distance requires identical grids");
  return std::sqrt((a.data - b.data).squaredNorm() * a.cell_volume());
}

RVec fft_wavenumbers(const GridAxis& ax) {
  RVec k(ax.n);
  const double dk = 2.0 * kPi / (ax.max - ax.min);
  for (Index m = 0; m < ax.n; ++m)
    k[m] = dk * static_cast<double>(m < ax.n / 2 ? m : m - ax.n);
  return k;
}

void fft_axis(CVec& data, const std::vector<GridAxis>& axes, Index axis,
              bool forward) {
  const Index d = static_cast<Index>(axes.size());
  Index inner = 1;
  for (Index ax = axis + 1; ax < d; ++ax) inner *= axes[ax].n;
  Index outer = 1;
  for (Index ax = 0; ax < axis; ++ax) outer *= axes[ax].n;
  const Index n = axes[axis].n;

  Eigen::FFT<double> fft;
  std::vector<Complex> line(n), spec(n);
  for (Index o = 0; o < outer; ++o) {
    for (Index in = 0; in < inner; ++in) {
      const Index start = o * n * inner + in;
      for (Index j = 0; j < n; ++j) line[j] = data[start + j * inner];
      if (forward)
        fft.fwd(spec, line);
      else
        fft.inv(spec, line);
      for (Index j = 0; j < n; ++j) data[start + j * inner] = spec[j];
    }
  }
}

void fft_all(CVec& data, const std::vector<GridAxis>& axes, bool forward) {
  for (Index ax = 0; ax < static_cast<Index>(axes.size()); ++ax)
    fft_axis(data, axes, ax, forward);
}

std::vector<WavefunctionGrid> spectral_gradient(const WavefunctionGrid& g) {
  std::vector<WavefunctionGrid> out;
  for (Index ax = 0; ax < g.d; ++ax) {
    WavefunctionGrid der = g;
    fft_axis(der.data, der.axes, ax, true);
    const RVec k = fft_wavenumbers(g.axes[ax]);
    Index inner = 1;
    for (Index a = ax + 1; a < g.d; ++a) inner *= g.axes[a].n;
    for (Index i = 0; i < der.size(); ++i) {
      const Index m = (i / inner) % g.axes[ax].n;
      der.data[i] *= Complex{0.0, k[m]};
    }
    fft_axis(der.data, der.axes, ax, false);
    out.push_back(std::move(der));
  }
  return out;
}

namespace {

std::vector<std::pair<double, double>> extent_from_mass(
    const CVec& data, const WavefunctionGrid& g, bool momentum,
    double rel_tail) {
  std::vector<std::pair<double, double>> out;
  const double total = data.squaredNorm();
  for (Index ax = 0; ax < g.d; ++ax) {
    Index inner = 1;
    for (Index a = ax + 1; a < g.d; ++a) inner *= g.axes[a].n;
    const Index n = g.axes[ax].n;
    RVec mass = RVec::Zero(n);
    for (Index i = 0; i < data.size(); ++i)
      mass[(i / inner) % n] += std::norm(data[i]);

    RVec coord(n);
    if (momentum) {
      const RVec k = fft_wavenumbers(g.axes[ax]);
      for (Index m = 0; m < n; ++m) coord[m] = g.eps * k[m];
    } else {
      for (Index m = 0; m < n; ++m)
        coord[m] = g.axes[ax].min + m * g.axes[ax].delta();
    }
    double lo = coord.maxCoeff(), hi = coord.minCoeff();
    for (Index m = 0; m < n; ++m) {
      if (mass[m] > rel_tail * total) {
        lo = std::min(lo, coord[m]);
        hi = std::max(hi, coord[m]);
      }
    }
    if (lo > hi) lo = hi = 0.0;
    out.emplace_back(lo, hi);
  }
  return out;
}

}  // namespace

std::vector<std::pair<double, double>> position_extent(
    const WavefunctionGrid& g, double rel_tail) {
  return extent_from_mass(g.data, g, false, rel_tail);
}

std::vector<std::pair<double, double>> momentum_extent(
    const WavefunctionGrid& g, double rel_tail) {
  CVec spec = g.data;
  fft_all(spec, g.axes, true);
  return extent_from_mass(spec, g, true, rel_tail);
}

void save_wfgrid(const WavefunctionGrid& g, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInputError("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  const std::uint32_t endian = 1;
  const std::uint32_t d32 = static_cast<std::uint32_t>(g.d);
  os.write(reinterpret_cast<const char*>(&endian), 4);
  os.write(reinterpret_cast<const char*>(&d32), 4);
  for (const auto& ax : g.axes) {
    const std::uint64_t n64 = static_cast<std::uint64_t>(ax.n);
    os.write(reinterpret_cast<const char*>(&ax.min), 8);
    os.write(reinterpret_cast<const char*>(&ax.max), 8);
    os.write(reinterpret_cast<const char*>(&n64), 8);
  }
  os.write(reinterpret_cast<const char*>(&g.eps), 8);
  for (Index i = 0; i < g.size(); ++i) {
    const double re = g.data[i].real(), im = g.data[i].imag();
    os.write(reinterpret_cast<const char*>(&re), 8);
    os.write(reinterpret_cast<const char*>(&im), 8);
  }
  if (!os) throw InvalidInputError("short write to " + path);

  nlohmann::json meta;
  meta["format"] = "WFGRID01";
  meta["d"] = g.d;
  meta["eps"] = g.eps;
  meta["endianness"] = "little";
  for (const auto& ax : g.axes)
    meta["axes"].push_back({{"x_min", ax.min}, {"x_max", ax.max}, {"n", ax.n}});
  std::ofstream js(path + ".json");
  js << meta.dump(2) << "\n";
}

WavefunctionGrid load_wfgrid(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInputError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw InvalidInputError(path + ": not a WFGRID01 file");
  std::uint32_t endian = 0, d32 = 0;
  is.read(reinterpret_cast<char*>(&endian), 4);
  is.read(reinterpret_cast<char*>(&d32), 4);
  if (endian != 1) throw InvalidInputError(path + ": unsupported endianness");
  if (d32 == 0 || d32 > 8) throw InvalidInputError(path + ": bad dimension");
  std::vector<GridAxis> axes(d32);
  for (auto& ax : axes) {
    std::uint64_t n64 = 0;
    is.read(reinterpret_cast<char*>(&ax.min), 8);
    is.read(reinterpret_cast<char*>(&ax.max), 8);
    is.read(reinterpret_cast<char*>(&n64), 8);
    ax.n = static_cast<Index>(n64);
  }
  double eps = 0.0;
  is.read(reinterpret_cast<char*>(&eps), 8);
  WavefunctionGrid g(axes, eps);
  for (Index i = 0; i < g.size(); ++i) {
    double re = 0.0, im = 0.0;
    is.read(reinterpret_cast<char*>(&re), 8);
    is.read(reinterpret_cast<char*>(&im), 8);
    g.data[i] = Complex{re, im};
  }
  if (!is) throw InvalidInputError(path + ": truncated data");
  return g;
}

}  // namespace hkprop
