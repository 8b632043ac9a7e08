#pragma once

#include <array>
#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "eddy/types.hpp"

namespace eddy {

/// Quadrature rule in barycentric coordinates (lambda1..lambda3 stored;
/// lambda0 = 1 - sum). Weights sum to 1 and are applied times |K|.
struct TetRule {
  std::vector<Eigen::Vector3d> points;  // (l1, l2, l3)
  std::vector<double> weights;
};

/// 4-point rule, exact for polynomials of total degree 2.
inline const TetRule& tet_rule_degree2() {
  static const TetRule rule = [] {
    TetRule r;
    const double a = (5.0 + 3.0 * std::sqrt(5.0)) / 20.0;  // 0.5854...
    const double b = (5.0 - std::sqrt(5.0)) / 20.0;        // 0.1382...
    // point i has lambda_i = a, others = b
    r.points = {{a, b, b}, {b, a, b}, {b, b, a}, {b, b, b}};
    r.weights = {0.25, 0.25, 0.25, 0.25};
    return r;
  }();
  return rule;
}

namespace detail {

/// Gauss-Jacobi nodes/weights for weight (1-x)^alpha on [0,1] via
/// Golub-Welsch on the symmetric Jacobi recurrence (beta = 0).
inline void gauss_jacobi01(int n, double alpha, std::vector<double>& x,
                           std::vector<double>& w) {
  const double beta = 0.0;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  auto diag = [&](int k) -> double {
    const double apb = alpha + beta;
    if (k == 0) return (beta - alpha) / (apb + 2.0);
    const double d = (2.0 * k + apb) * (2.0 * k + apb + 2.0);
    return (beta * beta - alpha * alpha) / d;
  };
  auto offdiag2 = [&](int k) -> double {  // b_k^2, k >= 1
    const double apb = alpha + beta;
    const double num = 4.0 * k * (k + alpha) * (k + beta) * (k + apb);
    const double den = (2.0 * k + apb) * (2.0 * k + apb) *
                       (2.0 * k + apb + 1.0) * (2.0 * k + apb - 1.0);
    return num / den;
  };
  for (int k = 0; k < n; ++k) J(k, k) = diag(k);
  for (int k = 1; k < n; ++k) {
    const double b = std::sqrt(offdiag2(k));
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  // mu0 = int_{-1}^{1} (1-t)^alpha dt = 2^{alpha+1}/(alpha+1)
  const double mu0 = std::pow(2.0, alpha + 1.0) / (alpha + 1.0);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = es.eigenvalues()(i);
    x[i] = 0.5 * (1.0 + t);  // map to [0,1]
    const double v0 = es.eigenvectors()(0, i);
    // weight on [0,1] carries the (1-u)^alpha factor and the 1/2^{alpha+1}
    // scaling of the map, so sum w = 1/(alpha+1)
    w[i] = mu0 * v0 * v0 / std::pow(2.0, alpha + 1.0);
  }
}

}  // namespace detail

/// Stroud conical-product rule with n points per axis; exact for total
/// degree 2n-1. Weights sum to 1 (reference volume factored out).
inline TetRule tet_rule_conical(int n) {
  std::vector<double> x1, w1, x2, w2, x3, w3;
  detail::gauss_jacobi01(n, 2.0, x1, w1);
  detail::gauss_jacobi01(n, 1.0, x2, w2);
  detail::gauss_jacobi01(n, 0.0, x3, w3);
  TetRule r;
  r.points.reserve(n * n * n);
  r.weights.reserve(n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const double u = x1[i];
        const double v = x2[j] * (1.0 - u);
        const double w = x3[k] * (1.0 - u) * (1.0 - x2[j]);
        r.points.push_back({u, v, w});
        // the (1-u)^2 (1-v') Jacobian is absorbed by the Jacobi weights;
        // normalize so weights sum to 1 over the reference tet (volume 1/6)
        r.weights.push_back(6.0 * w1[i] * w2[j] * w3[k]);
      }
  return r;
}

/// Integrate f over a tetrahedron: sum w_q |K| f(x_q).
template <typename F>
auto integrate_tet(const std::array<Vec3, 4>& v, const TetRule& rule, F&& f) {
  const double vol =
      (v[1] - v[0]).cross(v[2] - v[0]).dot(v[3] - v[0]) / 6.0;
  using R = decltype(f(Vec3{}, Eigen::Vector4d{}));
  R acc = R{};
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const auto& p = rule.points[q];
    const double l0 = 1.0 - p[0] - p[1] - p[2];
    Eigen::Vector4d lam(l0, p[0], p[1], p[2]);
    Vec3 x = l0 * v[0] + p[0] * v[1] + p[1] * v[2] + p[2] * v[3];
    acc += rule.weights[q] * std::abs(vol) * f(x, lam);
  }
  return acc;
}

/// Integrate over a tet subdivided `levels` times (8-way red split per
/// level), applying `rule` on each child. Used where the integrand is not
/// polynomial (coil source moments and their oracles).
template <typename F>
auto integrate_tet_refined(const std::array<Vec3, 4>& v, int levels,
                           const TetRule& rule, F&& f)
    -> decltype(integrate_tet(v, rule, f)) {
  if (levels <= 0) return integrate_tet(v, rule, f);
  const Vec3 m01 = 0.5 * (v[0] + v[1]), m02 = 0.5 * (v[0] + v[2]),
             m03 = 0.5 * (v[0] + v[3]), m12 = 0.5 * (v[1] + v[2]),
             m13 = 0.5 * (v[1] + v[3]), m23 = 0.5 * (v[2] + v[3]);
  const std::array<std::array<Vec3, 4>, 8> kids = {{
      {v[0], m01, m02, m03},
      {m01, v[1], m12, m13},
      {m02, m12, v[2], m23},
      {m03, m13, m23, v[3]},
      {m01, m02, m03, m13},
      {m01, m02, m12, m13},
      {m02, m03, m13, m23},
      {m02, m12, m13, m23},
  }};
  auto acc = integrate_tet_refined(kids[0], levels - 1, rule, f);
  for (int i = 1; i < 8; ++i)
    acc += integrate_tet_refined(kids[i], levels - 1, rule, f);
  return acc;
}

}  // namespace eddy
