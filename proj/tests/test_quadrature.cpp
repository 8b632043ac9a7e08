#include <catch2/catch_amalgamated.hpp>

#include "eddy/quadrature.hpp"

using namespace eddy;

namespace {

// exact integral of x^a y^b z^c over the reference tetrahedron
double exact_monomial(int a, int b, int c) {
  auto fact = [](int n) {
    double f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
  };
  return fact(a) * fact(b) * fact(c) / fact(a + b + c + 3);
}

const std::array<Vec3, 4> kRef = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0),
                                  Vec3(0, 0, 1)};

double integrate_monomial(const TetRule& rule, int a, int b, int c) {
  return integrate_tet(kRef, rule, [&](const Vec3& x, const Eigen::Vector4d&) {
    return std::pow(x.x(), a) * std::pow(x.y(), b) * std::pow(x.z(), c);
  });
}

}  // namespace

TEST_CASE("degree-2 rule integrates quadratics exactly") {
  const auto& rule = tet_rule_degree2();
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; a + b <= 2; ++b)
      for (int c = 0; a + b + c <= 2; ++c)
        REQUIRE_THAT(integrate_monomial(rule, a, b, c),
                     Catch::Matchers::WithinRel(exact_monomial(a, b, c), 1e-14));
}

TEST_CASE("conical rules reach their advertised degree") {
  for (int n : {2, 3, 5}) {
    const TetRule rule = tet_rule_conical(n);
    const int degree = 2 * n - 1;
    double wsum = 0;
    for (double w : rule.weights) wsum += w;
    REQUIRE_THAT(wsum, Catch::Matchers::WithinRel(1.0, 1e-13));
    for (int a = 0; a <= degree; ++a)
      for (int b = 0; a + b <= degree; ++b)
        for (int c = 0; a + b + c <= degree; ++c)
          REQUIRE_THAT(integrate_monomial(rule, a, b, c),
                       Catch::Matchers::WithinRel(exact_monomial(a, b, c), 1e-12));
  }
}

TEST_CASE("refined integration converges on a smooth non-polynomial") {
  const std::array<Vec3, 4> tet = {Vec3(7.8, 0.1, 0), Vec3(8.5, 0, 0.2),
                                   Vec3(8.0, 0.6, 0), Vec3(8.1, 0.2, 0.5)};
  auto f = [](const Vec3& x, const Eigen::Vector4d&) {
    return std::sin(x.x()) * std::exp(0.1 * x.y()) + x.z() / x.x();
  };
  const TetRule rule = tet_rule_conical(3);
  const double coarse = integrate_tet(tet, rule, f);
  const double fine = integrate_tet_refined(tet, 3, rule, f);
  const double finer = integrate_tet_refined(tet, 4, rule, f);
  REQUIRE_THAT(fine, Catch::Matchers::WithinRel(finer, 1e-12));
  REQUIRE_THAT(coarse, Catch::Matchers::WithinRel(finer, 1e-6));
}
