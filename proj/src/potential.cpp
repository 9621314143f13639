#include "hkprop/potential.hpp"

#include <cmath>
#include <random>

#include "hkprop/errors.hpp"

namespace hkprop {

namespace {

double param_or(const std::map<std::string, double>& p, const std::string& k,
                double fallback) {
  auto it = p.find(k);
  return it == p.end() ? fallback : it->second;
}

}  // namespace

double Potential::gradient_self_test(int samples, double range,
                                     std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-range, range);
  const double h = 1e-5;
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    RVec x(d);
    for (Index j = 0; j < d; ++j) x[j] = uni(rng);
    const RVec g = gradient(x);
    for (Index j = 0; j < d; ++j) {
      RVec xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      const double fd = (value(xp) - value(xm)) / (2.0 * h);
      const double rel = std::abs(fd - g[j]) / (1.0 + std::abs(g[j]));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

bool Potential::spot_check_certificate(int samples, double range,
                                       std::uint64_t seed) const {
  if (certificate.empty()) return false;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(-range, range);
  for (int s = 0; s < samples; ++s) {
    RVec x(d);
    for (Index j = 0; j < d; ++j) x[j] = uni(rng);
    if (hessian(x).cwiseAbs().maxCoeff() > 1.05 * certificate[0]) return false;
  }
  return true;
}

Potential make_potential(const std::string& name,
                         const std::map<std::string, double>& params, Index d) {
  Potential p;
  p.name = name;
  p.d = d;
  if (name == "free") {
    p.value = [](const RVec&) { return 0.0; };
    p.gradient = [d](const RVec&) { return RVec::Zero(d).eval(); };
    p.hessian = [d](const RVec&) { return RMat::Zero(d, d).eval(); };
    p.certificate = {0.0, 0.0, 0.0};
  } else if (name == "harmonic") {
    const double w = param_or(params, "omega", 1.0);
    const double w2 = w * w;
    p.value = [w2](const RVec& x) { return 0.5 * w2 * x.squaredNorm(); };
    p.gradient = [w2](const RVec& x) { return (w2 * x).eval(); };
    p.hessian = [w2, d](const RVec&) { return (w2 * RMat::Identity(d, d)).eval(); };
    p.certificate = {w2, 0.0, 0.0};
  } else if (name == "cosine") {
    // V(x) = a * sum_j cos(k x_j); every derivative of order >= 2 is
    // bounded by a k^2 (order 2), a k^3, ...
    const double a = param_or(params, "amplitude", 1.0);
    const double k = param_or(params, "wavenumber", 1.0);
    p.value = [a, k](const RVec& x) {
      double v = 0.0;
      for (Index j = 0; j < x.size(); ++j) v += std::cos(k * x[j]);
      return a * v;
    };
    p.gradient = [a, k](const RVec& x) {
      RVec g(x.size());
      for (Index j = 0; j < x.size(); ++j) g[j] = -a * k * std::sin(k * x[j]);
      return g;
    };
    p.hessian = [a, k](const RVec& x) {
      RMat h = RMat::Zero(x.size(), x.size());
      for (Index j = 0; j < x.size(); ++j) h(j, j) = -a * k * k * std::cos(k * x[j]);
      return h;
    };
    const double ak = std::abs(a);
    p.certificate = {ak * k * k, ak * k * k * k, ak * k * k * k * k};
  } else if (name == "gaussian-barrier") {
    const double h0 = param_or(params, "height", 1.0);
    const double w = param_or(params, "width", 1.0);
    if (w <= 0.0) throw ConfigError("gaussian-barrier: width must be positive");
    const double iw2 = 1.0 / (w * w);
    p.value = [h0, iw2](const RVec& x) {
      return h0 * std::exp(-0.5 * iw2 * x.squaredNorm());
    };
    p.gradient = [h0, iw2](const RVec& x) {
      return (-h0 * iw2 * std::exp(-0.5 * iw2 * x.squaredNorm()) * x).eval();
    };
    p.hessian = [h0, iw2, d](const RVec& x) {
      const double e = h0 * std::exp(-0.5 * iw2 * x.squaredNorm());
      RMat h = RMat::Identity(d, d);
      h *= -e * iw2;
      h += e * iw2 * iw2 * (x * x.transpose());
      return h.eval();
    };
    const double habs = std::abs(h0);
    p.certificate = {2.0 * habs * iw2, 3.0 * habs * iw2 / w, 6.0 * habs * iw2 * iw2};
  } else {
    throw ConfigError("unknown potential: " + name);
  }
  return p;
}

}  // namespace hkprop
