#pragma once

#include <functional>
#include <vector>

#include "eddy/adjoint.hpp"
#include "eddy/forward.hpp"
#include "eddy/mesh.hpp"

namespace eddy {

/// Which one-sided trace of curl P enters the adjoint brace. The vacuum side
/// is the default reading; the deposit side is kept switchable so the
/// difference-quotient check can adjudicate.
enum class AdjointTraceSide { Vacuum, Deposit };

/// One-sided traces on an interface triangle for one (k, l) coil pair at one
/// probe position. Side index 0 = deposit side, 1 = vacuum side. Tangential
/// electric traces are taken from the deposit (conductor) side, where the
/// scalar potentials live.
struct TraceSample {
  Vec3 normal = Vec3::Zero();
  double area = 0;
  CVec3 curl_A_k[2], curl_A0_l[2], curl_P_l[2];
  Complex n_curl_A_k[2], n_curl_A0_l[2], n_curl_P_l[2];
  CVec3 E_k_tau, E0_l_tau, EP_l_tau;
};

namespace detail {

inline Eigen::Vector4d barycentric(const LabeledTetMesh& mesh, const ElemGeom& geo,
                                   int t, const Vec3& x) {
  const Vec3 x0 = mesh.vertices[mesh.tets[t][0]];
  Eigen::Vector4d lam;
  lam[1] = geo.grad[1].dot(x - x0);
  lam[2] = geo.grad[2].dot(x - x0);
  lam[3] = geo.grad[3].dot(x - x0);
  lam[0] = 1.0 - lam[1] - lam[2] - lam[3];
  return lam;
}

inline CVec3 tangential(const CVec3& v, const Vec3& n) {
  Complex vn = 0;
  for (int i = 0; i < 3; ++i) vn += v[i] * n[i];
  return v - vn * n.cast<Complex>();
}

}  // namespace detail

inline std::vector<TraceSample> extract_traces(const LabeledTetMesh& mesh,
                                               const InterfaceGamma& gamma,
                                               const FieldSolution& f_k,
                                               const FieldSolution& f0_l,
                                               const AdjointSolution& adj_l) {
  if (f_k.geom_hash != f0_l.geom_hash || f_k.geom_hash != adj_l.geom_hash)
    throw ContractError("trace inputs live on different geometries");
  if (f_k.zeta != f0_l.zeta || f_k.zeta != adj_l.zeta)
    throw ContractError("trace inputs at different probe positions");
  std::vector<TraceSample> out;
  out.reserve(gamma.tris.size());
  for (const auto& tri : gamma.tris) {
    TraceSample s;
    s.normal = tri.normal;
    s.area = tri.area;
    const int tets[2] = {tri.tet_deposit, tri.tet_vacuum};
    for (int side = 0; side < 2; ++side) {
      const int t = tets[side];
      const auto geo = element_geometry(mesh, t);
      s.curl_A_k[side] = curl_A(mesh, geo, f_k, t);
      s.curl_A0_l[side] = curl_A(mesh, geo, f0_l, t);
      s.curl_P_l[side] = curl_P(mesh, geo, adj_l, t);
      s.n_curl_A_k[side] = cdot(s.curl_A_k[side], tri.normal.cast<Complex>());
      s.n_curl_A0_l[side] = cdot(s.curl_A0_l[side], tri.normal.cast<Complex>());
      s.n_curl_P_l[side] = cdot(s.curl_P_l[side], tri.normal.cast<Complex>());
    }
    const int td = tri.tet_deposit;
    const auto geo_d = element_geometry(mesh, td);
    const auto lam = detail::barycentric(mesh, geo_d, td, tri.centroid);
    s.E_k_tau = detail::tangential(E_at(mesh, geo_d, f_k, td, lam), tri.normal);
    s.E0_l_tau = detail::tangential(E_at(mesh, geo_d, f0_l, td, lam), tri.normal);
    s.EP_l_tau = detail::tangential(EP_at(mesh, geo_d, adj_l, td, lam), tri.normal);
    out.push_back(s);
  }
  return out;
}

/// Integrand of the adjoint impedance shape derivative: the brace evaluated
/// from one-sided traces. Multiplied by (n.theta) and integrated over the
/// interface it yields dZ_kl'(theta) up to the i omega / |J|^2 prefactor.
inline Complex shape_brace(const TraceSample& s, const MaterialTable& mat,
                           double omega,
                           AdjointTraceSide side = AdjointTraceSide::Vacuum) {
  const int ps = side == AdjointTraceSide::Vacuum ? 1 : 0;
  const double mu_d = mat.mu_of(Region::Deposit, true);
  const double mu_0 = mat.mu_of(Region::Deposit, false);
  const CVec3 n = s.normal.cast<Complex>();

  Complex brace = mat.jump_inv_mu() * s.n_curl_A_k[0] *
                  (std::conj(s.n_curl_P_l[ps]) - s.n_curl_A0_l[0]);
  const CVec3 hk_t = (1.0 / mu_d) * s.curl_A_k[0].cross(n);
  const CVec3 hp_t = (1.0 / mu_0) * s.curl_P_l[ps].conjugate().cross(n);
  const CVec3 h0_t = (1.0 / mu_0) * s.curl_A0_l[0].cross(n);
  brace -= mat.jump_mu() * cdot(hk_t, hp_t - h0_t);
  brace += (1.0 / (I * omega)) * mat.jump_sigma() *
           cdot(s.E_k_tau, s.EP_l_tau.conjugate() + s.E0_l_tau);
  return brace;
}

/// Adjoint-based shape derivative of dZ_kl for a normal perturbation field
/// given by its value at each interface triangle centroid.
inline Complex impedance_shape_derivative(const std::vector<TraceSample>& samples,
                                          const std::vector<double>& theta_normal,
                                          const MaterialTable& mat, double omega,
                                          double J_mag,
                                          AdjointTraceSide side = AdjointTraceSide::Vacuum) {
  if (samples.size() != theta_normal.size())
    throw ContractError("perturbation values do not match the interface");
  Complex acc = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    acc += samples[i].area * theta_normal[i] *
           shape_brace(samples[i], mat, omega, side);
  return I * omega / (J_mag * J_mag) * acc;
}

/// Interface gradient density plus its projection on the parameter table.
struct ShapeGradient {
  std::vector<double> g;     // per interface triangle
  std::vector<double> dfdL;  // layers x sectors, row-major
  Mode mode = Mode::FA;
  int layers = 0, sectors = 0;
  std::vector<double> positions;  // probe positions integrated
};

/// Accumulate one probe position into the per-facet density:
///   g_T += w * sum_pairs sign * Re( conj(residual) * brace_T ).
inline void accumulate_gradient_density(std::vector<double>& g, double weight,
                                        Complex residual,
                                        const std::vector<TraceSample>& samples,
                                        double pair_sign, const MaterialTable& mat,
                                        double omega, AdjointTraceSide side) {
  if (g.size() != samples.size())
    throw ContractError("density accumulator does not match the interface");
  for (std::size_t i = 0; i < g.size(); ++i)
    g[i] += weight * pair_sign *
            std::real(std::conj(residual) * shape_brace(samples[i], mat, omega, side));
}

/// Directional derivative of the misfit for uniformly thickening each grid
/// cell radially: only the laterally facing interface facets respond.
inline std::vector<double> parameter_gradient(const std::vector<double>& g,
                                              const InterfaceGamma& gamma,
                                              const FixedGrid& grid, double omega,
                                              double J_mag) {
  if (g.size() != gamma.tris.size())
    throw ContractError("density does not match the interface");
  std::vector<double> dfdL(static_cast<std::size_t>(grid.layers) * grid.sectors, 0.0);
  for (std::size_t i = 0; i < gamma.tris.size(); ++i) {
    const auto& tri = gamma.tris[i];
    if (!tri.lateral || tri.layer < 0) continue;
    const Vec3 er = Vec3(tri.centroid.x(), tri.centroid.y(), 0).normalized();
    dfdL[grid.cell_index(tri.layer, tri.sector)] +=
        -(omega / (J_mag * J_mag)) * g[i] * tri.normal.dot(er) * tri.area;
  }
  return dfdL;
}

/// Predicted first variation along theta = g n (always nonpositive).
inline double predicted_descent_value(const std::vector<double>& g,
                                      const InterfaceGamma& gamma, double omega,
                                      double J_mag) {
  double acc = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    acc += g[i] * g[i] * gamma.tris[i].area;
  return -(omega / (J_mag * J_mag)) * acc;
}

// ---------------------------------------------------------------------------
// Node-moving perturbation (the difference-quotient oracle geometry)
// ---------------------------------------------------------------------------

/// Smooth radial perturbation supported on [r0, r1] x [z0, z1], vanishing on
/// the source region and the domain boundary. C^2 smoothstep ramps.
struct RadialBump {
  double r0, r1;
  double z0, z1;
  double ramp_r, ramp_z;

  static double smoothstep(double u) {
    u = std::clamp(u, 0.0, 1.0);
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u));
  }
  double profile(double r, double z) const {
    if (r <= r0 || r >= r1 || z <= z0 || z >= z1) return 0.0;
    const double sr = smoothstep((r - r0) / ramp_r) * smoothstep((r1 - r) / ramp_r);
    const double sz = smoothstep((z - z0) / ramp_z) * smoothstep((z1 - z) / ramp_z);
    return sr * sz;
  }
  Vec3 operator()(const Vec3& x) const {
    const double r = std::hypot(x.x(), x.y());
    const double s = profile(r, x.z());
    if (s == 0.0 || r == 0.0) return Vec3::Zero();
    return s / r * Vec3(x.x(), x.y(), 0.0);
  }
};

/// Moves vertices by t * theta(x), keeping topology and labels.
inline LabeledTetMesh deform_mesh(const LabeledTetMesh& mesh,
                                  const std::function<Vec3(const Vec3&)>& theta,
                                  double t) {
  LabeledTetMesh out = mesh;
  for (auto& v : out.vertices) v += t * theta(v);
  out.finalize();
  return out;
}

}  // namespace eddy
