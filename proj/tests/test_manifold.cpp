#include <cmath>
#include <vector>

#include "doctest.h"
#include "dsrl/manifold.hpp"
#include "dsrl/rng.hpp"

using namespace dsrl;

namespace {

LorentzPoint random_point(Rng& rng, int dim, double radius = 2.0) {
  std::vector<double> e(static_cast<size_t>(dim));
  for (double& v : e) v = rng.uniform(-radius, radius);
  return lift_from_euclidean(e);
}

TangentVector random_tangent(Rng& rng, const LorentzPoint& x, double max_norm) {
  std::vector<double> u(x.coords().size());
  for (double& v : u) v = rng.gaussian();
  TangentVector tv = project_to_tangent(x, u);
  const double n = std::sqrt(std::max(0.0, lorentz_inner(tv.coords, tv.coords)));
  if (n > 0.0) {
    const double target = rng.uniform(0.0, max_norm);
    for (double& v : tv.coords) v *= target / n;
  }
  return tv;
}

}  // namespace

TEST_CASE("lorentz inner product") {
  std::vector<double> o{1.0, 0.0, 0.0};
  CHECK(lorentz_inner(o, o) == doctest::Approx(-1.0).epsilon(1e-15));

  std::vector<double> x{std::sqrt(2.0), 1.0, 0.0};
  std::vector<double> y{std::sqrt(2.0), 0.0, 1.0};
  CHECK(lorentz_inner(x, y) == doctest::Approx(-2.0).epsilon(1e-15));

  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> a(4), b(4);
    for (double& v : a) v = rng.gaussian();
    for (double& v : b) v = rng.gaussian();
    CHECK(lorentz_inner(a, b) == doctest::Approx(lorentz_inner(b, a)).epsilon(1e-14));
  }

  std::vector<double> short_vec{1.0, 2.0};
  CHECK_THROWS_AS((void)lorentz_inner(o, short_vec), DimensionError);
}

TEST_CASE("manifold membership") {
  ManifoldConfig cfg;
  std::vector<double> on{1.0, 0.0, 0.0};
  std::vector<double> lower{-1.0, 0.0, 0.0};
  std::vector<double> off{1.0, 1.0, 0.0};
  CHECK(is_on_manifold(on, cfg));
  CHECK_FALSE(is_on_manifold(lower, cfg));
  CHECK_FALSE(is_on_manifold(off, cfg));
  CHECK_THROWS_AS(LorentzPoint({1.0, 1.0, 0.0}), GeometryError);
}

TEST_CASE("exp map closed forms") {
  const auto o = LorentzPoint::origin(2);
  TangentVector zero = make_tangent(o, {0.0, 0.0, 0.0});
  CHECK(exp_map(o, zero).coords() == o.coords());

  TangentVector v = make_tangent(o, {0.0, 1.0, 0.0});
  const auto y = exp_map(o, v);
  CHECK(y.coords()[0] == doctest::Approx(std::cosh(1.0)).epsilon(1e-15));
  CHECK(y.coords()[1] == doctest::Approx(std::sinh(1.0)).epsilon(1e-15));
  CHECK(y.coords()[2] == doctest::Approx(0.0));

  // non-tangent input rejected
  CHECK_THROWS_AS(make_tangent(o, {1.0, 0.0, 0.0}), GeometryError);
}

TEST_CASE("log map closed forms") {
  const auto o = LorentzPoint::origin(2);
  const auto y = LorentzPoint({std::cosh(1.0), std::sinh(1.0), 0.0});
  const auto v = log_map(o, y);
  CHECK(v.coords[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(v.coords[1] == doctest::Approx(1.0).epsilon(1e-12));

  const auto z = log_map(o, o);
  for (double c : z.coords) CHECK(c == 0.0);
}

TEST_CASE("exp/log roundtrip oracle") {
  Rng rng(41);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto x = random_point(rng, 3);
    const auto v = random_tangent(rng, x, 5.0);
    const auto y = exp_map(x, v);
    const auto w = log_map(x, y);
    for (size_t i = 0; i < v.coords.size(); ++i)
      worst = std::max(worst, std::abs(w.coords[i] - v.coords[i]));
  }
  CHECK(worst <= 1e-8);
}

TEST_CASE("geodesic distance") {
  const auto o = LorentzPoint::origin(2);
  const auto y = LorentzPoint({std::cosh(1.0), std::sinh(1.0), 0.0});
  CHECK(geodesic_distance(o, o) == 0.0);
  CHECK(geodesic_distance(o, y) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(geodesic_distance(y, o) == doctest::Approx(1.0).epsilon(1e-14));

  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const auto a = random_point(rng, 3);
    const auto b = random_point(rng, 3);
    const auto c = random_point(rng, 3);
    const double ab = geodesic_distance(a, b);
    const double bc = geodesic_distance(b, c);
    const double ac = geodesic_distance(a, c);
    CHECK(ab >= 0.0);
    CHECK(ab == geodesic_distance(b, a));
    CHECK(ac <= ab + bc + 1e-9);
  }
}

TEST_CASE("lift from euclidean") {
  std::vector<double> zero{0.0, 0.0};
  const auto o = lift_from_euclidean(zero);
  CHECK(o.coords() == std::vector<double>{1.0, 0.0, 0.0});

  std::vector<double> e{1.0, 0.0};
  const auto p = lift_from_euclidean(e);
  CHECK(p.coords()[0] == doctest::Approx(std::cosh(1.0)).epsilon(1e-15));
  CHECK(p.coords()[1] == doctest::Approx(std::sinh(1.0)).epsilon(1e-15));

  Rng rng(3);
  ManifoldConfig cfg;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> x(5);
    for (double& v : x) v = rng.uniform(-3.0, 3.0);
    const auto q = lift_from_euclidean(x);
    CHECK(is_on_manifold(q.coords(), cfg));
  }

  // injectivity on sampled inputs: distinct e give distance > 0
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(3), b(3);
    for (double& v : a) v = rng.uniform(-2.0, 2.0);
    for (double& v : b) v = rng.uniform(-2.0, 2.0);
    if (a == b) continue;
    CHECK(geodesic_distance(lift_from_euclidean(a), lift_from_euclidean(b)) > 0.0);
  }
}

TEST_CASE("project to tangent") {
  Rng rng(13);
  for (int t = 0; t < 500; ++t) {
    const auto x = random_point(rng, 3);
    std::vector<double> u(x.coords().size());
    for (double& v : u) v = rng.gaussian();
    const auto tv = project_to_tangent(x, u);
    CHECK(std::abs(lorentz_inner(x.coords(), tv.coords)) <= 1e-12);
  }

  // u = x projects to zero
  const auto o = LorentzPoint::origin(3);
  const auto z = project_to_tangent(o, o.coords());
  for (double c : z.coords) CHECK(std::abs(c) <= 1e-15);

  // an already-tangent vector is unchanged
  const auto x = random_point(rng, 2);
  auto tv = random_tangent(rng, x, 1.0);
  const auto back = project_to_tangent(x, tv.coords);
  for (size_t i = 0; i < tv.coords.size(); ++i)
    CHECK(back.coords[i] == doctest::Approx(tv.coords[i]).epsilon(1e-10));
}
