#include "dsrl/manifold.hpp"

#include <algorithm>
#include <cmath>

namespace dsrl {

namespace {

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DimensionError("lorentz_inner: vectors must have equal length >= 2");
  double acc = -x[0] * y[0];
  for (size_t i = 1; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

bool is_on_manifold(std::span<const double> x, const ManifoldConfig& cfg) {
  if (x.size() < 2) return false;
  const double q = lorentz_inner(x, x);
  return std::abs(q - 1.0 / cfg.curvature) <= cfg.tol && x[0] > 0.0;
}

LorentzPoint::LorentzPoint(std::vector<double> coords, ManifoldConfig cfg)
    : coords_(std::move(coords)), cfg_(cfg) {
  if (cfg_.curvature >= 0.0) throw ValidationError("LorentzPoint: curvature must be negative");
  if (cfg_.tol <= 0.0) throw ValidationError("LorentzPoint: tol must be positive");
  if (!is_on_manifold(coords_, cfg_))
    throw GeometryError("LorentzPoint: coordinates are not on the upper hyperboloid sheet");
}

LorentzPoint LorentzPoint::origin(int spatial_dim, ManifoldConfig cfg) {
  std::vector<double> c(static_cast<size_t>(spatial_dim) + 1, 0.0);
  c[0] = std::sqrt(-1.0 / cfg.curvature);
  return LorentzPoint(std::move(c), cfg);
}

TangentVector make_tangent(const LorentzPoint& base, std::vector<double> coords) {
  if (coords.size() != base.coords().size())
    throw DimensionError("make_tangent: ambient dimensions differ");
  const double ip = lorentz_inner(base.coords(), coords);
  const double scale = std::max(1.0, l2_norm(base.coords()) * l2_norm(coords));
  if (std::abs(ip) > base.config().tol * scale)
    throw GeometryError("make_tangent: vector is not orthogonal to the base point");
  return TangentVector{base, std::move(coords)};
}

LorentzPoint exp_map(const LorentzPoint& x, const TangentVector& v) {
  if (v.base.coords() != x.coords())
    throw GeometryError("exp_map: tangent vector is based at a different point");
  const double K = x.config().curvature;
  const double sqrt_mk = std::sqrt(-K);
  // Tangent vectors at upper-sheet points are spacelike; clamp tiny negative
  // roundoff in <v,v>_L before the square root.
  const double vv = std::max(0.0, lorentz_inner(v.coords, v.coords));
  const double vnorm = std::sqrt(vv);
  if (vnorm == 0.0) return x;
  const double t = sqrt_mk * vnorm;  // sqrt(-K) |v|_L
  const double ch = std::cosh(t);
  const double sh_over = std::sinh(t) / t;  // sinh(t) / (sqrt(-K) |v|_L)
  std::vector<double> out(x.coords().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = ch * x.coords()[i] + sh_over * v.coords[i];
  return LorentzPoint(std::move(out), x.config());
}

TangentVector log_map(const LorentzPoint& x, const LorentzPoint& y) {
  if (!(x.config() == y.config()))
    throw GeometryError("log_map: points carry different manifold configs");
  const double K = x.config().curvature;
  const double d = geodesic_distance(x, y);
  std::vector<double> u(x.coords().size());
  const double ip = lorentz_inner(x.coords(), y.coords());
  for (size_t i = 0; i < u.size(); ++i) u[i] = y.coords()[i] - K * ip * x.coords()[i];
  const double un = std::sqrt(std::max(0.0, lorentz_inner(u, u)));
  if (d == 0.0 || un == 0.0) {
    std::fill(u.begin(), u.end(), 0.0);
    return TangentVector{x, std::move(u)};
  }
  for (double& c : u) c *= d / un;
  return TangentVector{x, std::move(u)};
}

double geodesic_distance(const LorentzPoint& x, const LorentzPoint& y) {
  if (!(x.config() == y.config()))
    throw GeometryError("geodesic_distance: points carry different manifold configs");
  if (x.coords().size() != y.coords().size())
    throw DimensionError("geodesic_distance: ambient dimensions differ");
  const double K = x.config().curvature;
  const double z = K * lorentz_inner(x.coords(), y.coords());
  if (z < 1.0 - x.config().tol)
    throw GeometryError("geodesic_distance: points are not on a common sheet");
  // arguments within roundoff of 1 are coincident points: distance exactly 0
  return z <= 1.0 + 1e-12 ? 0.0 : std::acosh(z);
}

LorentzPoint lift_from_euclidean(std::span<const double> e) {
  std::vector<double> out(e.size() + 1);
  const double r = l2_norm(e);
  out[0] = std::cosh(r);
  if (r == 0.0) return LorentzPoint(std::move(out));
  const double s = std::sinh(r) / r;
  for (size_t i = 0; i < e.size(); ++i) out[i + 1] = s * e[i];
  return LorentzPoint(std::move(out));
}

TangentVector project_to_tangent(const LorentzPoint& x, std::span<const double> u) {
  if (u.size() != x.coords().size())
    throw DimensionError("project_to_tangent: ambient dimensions differ");
  const double K = x.config().curvature;
  std::vector<double> out(u.begin(), u.end());
  // two passes: the second removes the first's roundoff residual
  for (int pass = 0; pass < 2; ++pass) {
    const double ip = lorentz_inner(x.coords(), out);
    for (size_t i = 0; i < out.size(); ++i) out[i] -= K * ip * x.coords()[i];
  }
  return TangentVector{x, std::move(out)};
}

}  // namespace dsrl
