#pragma once

#include <memory>
#include <vector>

#include "eddy/assembly.hpp"
#include "eddy/mesh.hpp"
#include "eddy/physics.hpp"
#include "eddy/quadrature.hpp"
#include "eddy/solver.hpp"
#include "eddy/types.hpp"

namespace eddy {

/// Geometry-only hash (vertices + connectivity, labels excluded); two
/// realizations of the same invariant mesh share it.
inline std::uint64_t geometry_hash(const LabeledTetMesh& mesh) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  if (!mesh.vertices.empty())
    h = fnv1a(mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec3), h);
  if (!mesh.tets.empty())
    h = fnv1a(mesh.tets.data(), mesh.tets.size() * sizeof(mesh.tets[0]), h);
  return h;
}

struct FieldSolution {
  Eigen::VectorXcd A;  // 3 entries per node
  Eigen::VectorXcd V;  // physical scalar potential per conductor dof
  std::shared_ptr<const DofMap> dof;
  int coil = 0;
  double zeta = 0;
  bool with_deposit = true;
  double omega = 0;
  std::uint64_t geom_hash = 0;

  CVec3 A_node(int n) const { return CVec3(A[3 * n], A[3 * n + 1], A[3 * n + 2]); }
  /// Scalar potential with the zero extension outside the conductor.
  Complex V_node(int n) const {
    const int d = dof->v_dof[n];
    return d < 0 ? Complex(0) : V[d - dof->scalar_base()];
  }
};

/// curl A on element t (P1 fields have piecewise-constant curls).
inline CVec3 curl_A(const LabeledTetMesh& mesh, const ElemGeom& geo,
                    const FieldSolution& u, int t) {
  CVec3 c = CVec3::Zero();
  for (int a = 0; a < 4; ++a)
    c += geo.grad[a].cast<Complex>().cross(u.A_node(mesh.tets[t][a]));
  return c;
}

inline Complex div_A(const LabeledTetMesh& mesh, const ElemGeom& geo,
                     const FieldSolution& u, int t) {
  Complex d = 0;
  for (int a = 0; a < 4; ++a)
    d += cdot(geo.grad[a].cast<Complex>(), u.A_node(mesh.tets[t][a]));
  return d;
}

inline CVec3 grad_V(const LabeledTetMesh& mesh, const ElemGeom& geo,
                    const FieldSolution& u, int t) {
  CVec3 g = CVec3::Zero();
  for (int a = 0; a < 4; ++a)
    g += u.V_node(mesh.tets[t][a]) * geo.grad[a].cast<Complex>();
  return g;
}

/// E = i omega A + grad V at a barycentric point of element t.
inline CVec3 E_at(const LabeledTetMesh& mesh, const ElemGeom& geo,
                  const FieldSolution& u, int t, const Eigen::Vector4d& lam) {
  CVec3 a = CVec3::Zero();
  for (int k = 0; k < 4; ++k) a += lam[k] * u.A_node(mesh.tets[t][k]);
  return I * u.omega * a + grad_V(mesh, geo, u, t);
}

/// One forward solve at probe position zeta with the given energized coil.
/// `sys`/`F` must be the assembly and factorization of the wanted view.
inline FieldSolution solve_fields(const LabeledTetMesh& mesh,
                                  const AssembledSystem& sys,
                                  const Factorization& F, const CoilConfig& coils,
                                  int coil, double zeta) {
  const SourceField src = build_source(mesh, coils, coil, zeta);
  const Eigen::VectorXcd b = assemble_forward_rhs(sys, mesh, src);
  const Eigen::VectorXcd x = F.solve(b);

  FieldSolution u;
  u.dof = std::make_shared<DofMap>(sys.dof);
  u.coil = coil;
  u.zeta = zeta;
  u.with_deposit = sys.with_deposit;
  u.omega = sys.omega;
  u.geom_hash = geometry_hash(mesh);
  u.A = x.head(3 * sys.dof.n_nodes);
  u.V = (I * sys.omega) * x.tail(static_cast<int>(sys.dof.v_nodes.size()));

  // gauge: the mean-value constraint must be active per component
  for (int comp = 0; comp < sys.dof.n_components; ++comp) {
    Complex mean = 0;
    double peak = 0;
    for (int d : sys.dof.component_dofs[comp]) {
      const Complex v = u.V[d - sys.dof.scalar_base()];
      mean += v;
      peak = std::max(peak, std::abs(v));
    }
    mean /= static_cast<double>(sys.dof.component_dofs[comp].size());
    if (peak > 0 && std::abs(mean) > 1e-10 * peak)
      throw NumericalError("scalar potential gauge constraint violated");
  }
  return u;
}

/// Impedance deviation between the with-deposit drive of coil k and the
/// deposit-free drive of coil l, as an unconjugated volume integral over the
/// deposit region.
inline Complex impedance(const LabeledTetMesh& mesh, const MaterialTable& mat,
                         double J_mag, const FieldSolution& f_k,
                         const FieldSolution& f0_l) {
  if (!f_k.with_deposit || f0_l.with_deposit)
    throw ContractError("impedance needs one with-deposit and one deposit-free solution");
  if (f_k.geom_hash != f0_l.geom_hash)
    throw ContractError("impedance inputs live on different geometries");
  if (f_k.zeta != f0_l.zeta)
    throw ContractError("impedance inputs at different probe positions");
  const double omega = f_k.omega;
  const double d_inv_mu = mat.jump_inv_mu();
  const double d_sigma = mat.jump_sigma();
  const TetRule& rule = tet_rule_degree2();

  Complex acc = 0;
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Deposit) continue;
    const auto geo = element_geometry(mesh, t);
    acc += d_inv_mu * geo.vol *
           cdot(curl_A(mesh, geo, f_k, t), curl_A(mesh, geo, f0_l, t));
    Complex e_term = 0;
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& p = rule.points[q];
      const Eigen::Vector4d lam(1.0 - p[0] - p[1] - p[2], p[0], p[1], p[2]);
      e_term += rule.weights[q] *
                cdot(E_at(mesh, geo, f_k, t, lam), E_at(mesh, geo, f0_l, t, lam));
    }
    acc += -(1.0 / (I * omega)) * d_sigma * geo.vol * e_term;
  }
  return I * omega / (J_mag * J_mag) * acc;
}

struct ImpedanceSignal {
  std::vector<double> zeta;
  std::vector<Complex> z11, z21, z22, fa, f3;
  Mode mode = Mode::FA;
  std::uint64_t mesh_hash = 0, config_hash = 0, deposit_hash = 0;

  std::size_t size() const { return zeta.size(); }
  const std::vector<Complex>& channel(Mode m) const {
    return m == Mode::FA ? fa : f3;
  }
  static Complex fa_of(Complex z11v, Complex z21v) {
    return 0.5 * I * (z11v + z21v);
  }
  static Complex f3_of(Complex z11v, Complex z22v) {
    return 0.5 * I * (z11v - z22v);
  }
};

/// Trapezoid weights over the scan positions; a single position integrates
/// with unit weight (point evaluation).
inline std::vector<double> zeta_weights(const std::vector<double>& zeta) {
  const std::size_t q = zeta.size();
  if (q == 0) return {};
  if (q == 1) return {1.0};
  std::vector<double> w(q, 0.0);
  for (std::size_t i = 0; i + 1 < q; ++i) {
    const double h = zeta[i + 1] - zeta[i];
    w[i] += 0.5 * h;
    w[i + 1] += 0.5 * h;
  }
  return w;
}

/// Misfit: trapezoid-in-zeta of |Z - Z_target|^2 on the given channel values.
inline double misfit_value(const std::vector<double>& zeta,
                           const std::vector<Complex>& z,
                           const std::vector<Complex>& target) {
  if (z.size() != target.size() || z.size() != zeta.size())
    throw ContractError("signal/target length mismatch");
  const auto w = zeta_weights(zeta);
  double f = 0;
  for (std::size_t i = 0; i < z.size(); ++i) f += w[i] * std::norm(z[i] - target[i]);
  return f;
}

}  // namespace eddy
