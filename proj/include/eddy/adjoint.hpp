#pragma once

#include <memory>

#include "eddy/assembly.hpp"
#include "eddy/forward.hpp"
#include "eddy/solver.hpp"

namespace eddy {

struct AdjointSolution {
  Eigen::VectorXcd P;  // 3 entries per node
  Eigen::VectorXcd W;  // physical scalar adjoint potential per conductor dof
  std::shared_ptr<const DofMap> dof;
  int coil_l = 0;
  double zeta = 0;
  double omega = 0;
  std::uint64_t geom_hash = 0;

  CVec3 P_node(int n) const { return CVec3(P[3 * n], P[3 * n + 1], P[3 * n + 2]); }
  Complex W_node(int n) const {
    const int d = dof->v_dof[n];
    return d < 0 ? Complex(0) : W[d - dof->scalar_base()];
  }
};

/// Right-hand side of the adjoint problem: the deposit-contrast functional
/// of the conjugated deposit-free fields, tested against the basis of the
/// with-deposit system (scalar tests carry the same i*omega scaling as the
/// forward assembly).
inline Eigen::VectorXcd assemble_adjoint_rhs(const AssembledSystem& sys_dep,
                                             const LabeledTetMesh& mesh,
                                             const MaterialTable& mat,
                                             const FieldSolution& f0_l) {
  if (!sys_dep.with_deposit)
    throw ContractError("adjoint right-hand side needs the with-deposit system");
  if (f0_l.with_deposit)
    throw ContractError("adjoint right-hand side needs deposit-free fields");
  if (geometry_hash(mesh) != f0_l.geom_hash)
    throw ContractError("deposit-free fields live on a different geometry");
  const double omega = sys_dep.omega;
  const double d_inv_mu = mat.jump_inv_mu();
  const double d_sigma = mat.jump_sigma();
  const Vec3 unit[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};

  Eigen::VectorXcd r = Eigen::VectorXcd::Zero(sys_dep.dof.size());
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Deposit) continue;
    const auto geo = element_geometry(mesh, t);
    const auto& k = mesh.tets[t];
    const CVec3 curl0_conj = curl_A(mesh, geo, f0_l, t).conjugate();
    // nodal values of conj(E0) (E0 linear per element)
    std::array<CVec3, 4> e0_conj;
    const CVec3 gv0 = grad_V(mesh, geo, f0_l, t);
    for (int a = 0; a < 4; ++a)
      e0_conj[a] = (I * omega * f0_l.A_node(k[a]) + gv0).conjugate();

    for (int a = 0; a < 4; ++a) {
      for (int c = 0; c < 3; ++c) {
        Complex val =
            d_inv_mu * geo.vol * cdot(curl0_conj, geo.grad[a].cross(unit[c]).cast<Complex>());
        CVec3 moment = CVec3::Zero();  // int lambda_a conj(E0)
        for (int b = 0; b < 4; ++b)
          moment += detail::p1_mass(a, b) * e0_conj[b];
        val -= d_sigma * geo.vol * moment[c];
        r[sys_dep.dof.a_dof(k[a], c)] += val;
      }
      // scalar row (scaled test): -int dsigma conj(E0) . grad psi_a
      const CVec3 e0_mean =
          0.25 * (e0_conj[0] + e0_conj[1] + e0_conj[2] + e0_conj[3]);
      r[sys_dep.dof.v_dof[k[a]]] -=
          d_sigma * geo.vol * cdot(e0_mean, geo.grad[a].cast<Complex>());
    }
  }
  for (int g : sys_dep.dof.gauge_dofs) r[g] = 0;
  return r;
}

/// Solves the adjoint system conj(S) y = r through the forward factorization:
/// valid because the assembled S is complex symmetric, so the adjoint matrix
/// is exactly the conjugate of S.
inline AdjointSolution solve_adjoint(const LabeledTetMesh& mesh,
                                     const AssembledSystem& sys_dep,
                                     const Factorization& F_dep,
                                     const Eigen::VectorXcd& rhs, int coil_l,
                                     double zeta) {
  const Eigen::VectorXcd y = F_dep.solve(rhs.conjugate()).conjugate();
  AdjointSolution adj;
  adj.dof = std::make_shared<DofMap>(sys_dep.dof);
  adj.coil_l = coil_l;
  adj.zeta = zeta;
  adj.omega = sys_dep.omega;
  adj.geom_hash = geometry_hash(mesh);
  adj.P = y.head(3 * sys_dep.dof.n_nodes);
  adj.W = (I * sys_dep.omega) * y.tail(static_cast<int>(sys_dep.dof.v_nodes.size()));
  return adj;
}

/// Direct route: factors conj(S) explicitly. Kept for the consistency checks
/// against the conjugation trick.
inline AdjointSolution solve_adjoint_direct(const LabeledTetMesh& mesh,
                                            const AssembledSystem& sys_dep,
                                            const Eigen::VectorXcd& rhs, int coil_l,
                                            double zeta) {
  const Eigen::SparseMatrix<Complex> Sc = sys_dep.S.conjugate();
  const Factorization F = Factorization::factor(Sc);
  const Eigen::VectorXcd y = F.solve(rhs);
  AdjointSolution adj;
  adj.dof = std::make_shared<DofMap>(sys_dep.dof);
  adj.coil_l = coil_l;
  adj.zeta = zeta;
  adj.omega = sys_dep.omega;
  adj.geom_hash = geometry_hash(mesh);
  adj.P = y.head(3 * sys_dep.dof.n_nodes);
  adj.W = (I * sys_dep.omega) * y.tail(static_cast<int>(sys_dep.dof.v_nodes.size()));
  return adj;
}

inline CVec3 curl_P(const LabeledTetMesh& mesh, const ElemGeom& geo,
                    const AdjointSolution& u, int t) {
  CVec3 c = CVec3::Zero();
  for (int a = 0; a < 4; ++a)
    c += geo.grad[a].cast<Complex>().cross(u.P_node(mesh.tets[t][a]));
  return c;
}

/// i omega P + grad W at a barycentric point (the adjoint analog of E).
inline CVec3 EP_at(const LabeledTetMesh& mesh, const ElemGeom& geo,
                   const AdjointSolution& u, int t, const Eigen::Vector4d& lam) {
  CVec3 p = CVec3::Zero();
  CVec3 gw = CVec3::Zero();
  for (int a = 0; a < 4; ++a) {
    p += lam[a] * u.P_node(mesh.tets[t][a]);
    gw += u.W_node(mesh.tets[t][a]) * geo.grad[a].cast<Complex>();
  }
  return I * u.omega * p + gw;
}

}  // namespace eddy
