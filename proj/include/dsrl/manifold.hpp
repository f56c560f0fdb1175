#pragma once

#include <span>
#include <vector>

#include "dsrl/errors.hpp"

namespace dsrl {

// Lorentz-model hyperbolic geometry. Points live on the upper sheet of the
// hyperboloid { x in R^(n+1) : <x,x>_L = 1/K, x0 > 0 } with curvature K < 0.
// All functions here are pure and operate at double precision.

struct ManifoldConfig {
  double curvature = -1.0;  // K
  double tol = 1e-9;        // membership tolerance

  bool operator==(const ManifoldConfig& o) const {
    return curvature == o.curvature && tol == o.tol;
  }
};

class LorentzPoint {
 public:
  // Validates membership on construction; throws GeometryError otherwise.
  explicit LorentzPoint(std::vector<double> coords, ManifoldConfig cfg = {});

  static LorentzPoint origin(int spatial_dim, ManifoldConfig cfg = {});

  const std::vector<double>& coords() const { return coords_; }
  double time() const { return coords_[0]; }
  std::span<const double> spatial() const {
    return std::span<const double>(coords_).subspan(1);
  }
  int ambient_dim() const { return static_cast<int>(coords_.size()); }
  int spatial_dim() const { return ambient_dim() - 1; }
  const ManifoldConfig& config() const { return cfg_; }

 private:
  std::vector<double> coords_;
  ManifoldConfig cfg_;
};

struct TangentVector {
  LorentzPoint base;
  std::vector<double> coords;
};

// <x,y>_L = -x0*y0 + sum_{i>=1} xi*yi
double lorentz_inner(std::span<const double> x, std::span<const double> y);

// true iff |<x,x>_L - 1/K| <= tol and x0 > 0
bool is_on_manifold(std::span<const double> x, const ManifoldConfig& cfg);

// Validates <base, coords>_L = 0 within tol; throws GeometryError otherwise.
TangentVector make_tangent(const LorentzPoint& base, std::vector<double> coords);

// exp_x(v) = cosh(sqrt(-K)|v|_L) x + sinh(sqrt(-K)|v|_L) v / (sqrt(-K)|v|_L)
LorentzPoint exp_map(const LorentzPoint& x, const TangentVector& v);

// log_x(y) = d(x,y) * u / |u|_L with u = y - K<x,y>_L x. Returns the zero
// tangent vector when x = y.
TangentVector log_map(const LorentzPoint& x, const LorentzPoint& y);

// d(x,y) = arccosh(K<x,y>_L), argument clamped to [1, inf) against roundoff.
// Arguments below 1 - tol are a hard GeometryError.
double geodesic_distance(const LorentzPoint& x, const LorentzPoint& y);

// [cosh(|e|), sinh(|e|) e / |e|]; e = 0 maps to the origin. Fixed K = -1.
LorentzPoint lift_from_euclidean(std::span<const double> e);

// Orthogonal projection of an ambient vector onto the tangent space at x.
TangentVector project_to_tangent(const LorentzPoint& x, std::span<const double> u);

}  // namespace dsrl
