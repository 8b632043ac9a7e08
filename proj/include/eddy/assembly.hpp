#pragma once

#include <array>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "eddy/mesh.hpp"
#include "eddy/physics.hpp"
#include "eddy/types.hpp"

namespace eddy {

// P1 discretization of the regularized A-V form. Unknown layout: three vector
// potential components per node, then one scalar per conductor node. The
// scalar unknown is stored scaled, v = V/(i omega); with that scaling every
// conductor block carries the common factor -i omega sigma and the assembled
// matrix is complex symmetric with no special row handling. Interfaces that
// expose V convert at the boundary of this module.

struct ElemGeom {
  std::array<Vec3, 4> grad;  // barycentric gradients
  double vol = 0;
};

inline ElemGeom element_geometry(const LabeledTetMesh& mesh, int t) {
  const auto v = mesh.tet_vertices(t);
  Eigen::Matrix3d E;
  E.col(0) = v[1] - v[0];
  E.col(1) = v[2] - v[0];
  E.col(2) = v[3] - v[0];
  ElemGeom g;
  g.vol = E.determinant() / 6.0;
  const Eigen::Matrix3d Einv = E.inverse();
  g.grad[1] = Einv.row(0);
  g.grad[2] = Einv.row(1);
  g.grad[3] = Einv.row(2);
  g.grad[0] = -(g.grad[1] + g.grad[2] + g.grad[3]);
  return g;
}

struct DofMap {
  int n_nodes = 0;
  bool with_deposit = true;
  std::vector<int> v_dof;       // per node: global scalar dof or -1
  std::vector<int> v_nodes;     // node carrying each scalar dof
  std::vector<int> v_component; // per scalar dof
  int n_components = 0;
  std::vector<int> gauge_dofs;  // one scalar dof per component
  std::vector<std::vector<int>> component_dofs;

  int a_dof(int node, int c) const { return 3 * node + c; }
  int scalar_base() const { return 3 * n_nodes; }
  int size() const { return 3 * n_nodes + static_cast<int>(v_nodes.size()); }
};

inline DofMap build_dofmap(const LabeledTetMesh& mesh, const MaterialTable& mat,
                           bool with_deposit) {
  DofMap dof;
  dof.n_nodes = mesh.node_count();
  dof.with_deposit = with_deposit;
  dof.v_dof.assign(dof.n_nodes, -1);

  detail::UnionFind uf(dof.n_nodes);
  std::vector<char> in_conductor(dof.n_nodes, 0);
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (!mat.is_conductor(mesh.labels[t], with_deposit)) continue;
    const auto& k = mesh.tets[t];
    for (int i = 0; i < 4; ++i) in_conductor[k[i]] = 1;
    for (int i = 1; i < 4; ++i) uf.unite(k[0], k[i]);
  }
  for (int n = 0; n < dof.n_nodes; ++n) {
    if (!in_conductor[n]) continue;
    dof.v_dof[n] = dof.scalar_base() + static_cast<int>(dof.v_nodes.size());
    dof.v_nodes.push_back(n);
  }
  std::unordered_map<int, int> root_to_comp;
  for (std::size_t i = 0; i < dof.v_nodes.size(); ++i) {
    const int root = uf.find(dof.v_nodes[i]);
    auto [it, fresh] =
        root_to_comp.emplace(root, static_cast<int>(root_to_comp.size()));
    dof.v_component.push_back(it->second);
  }
  dof.n_components = static_cast<int>(root_to_comp.size());
  dof.component_dofs.assign(dof.n_components, {});
  for (std::size_t i = 0; i < dof.v_nodes.size(); ++i)
    dof.component_dofs[dof.v_component[i]].push_back(dof.scalar_base() +
                                                     static_cast<int>(i));
  dof.gauge_dofs.resize(dof.n_components);
  for (int c = 0; c < dof.n_components; ++c) {
    if (dof.component_dofs[c].empty())
      throw AssemblyError("conductor component with no nodes");
    dof.gauge_dofs[c] = dof.component_dofs[c].front();
  }
  return dof;
}

/// Area-weighted outward normal per boundary node (normalized).
inline std::vector<std::pair<int, Vec3>> nodal_boundary_normals(
    const LabeledTetMesh& mesh) {
  std::unordered_map<int, Vec3> acc;
  for (const auto& tri : mesh.boundary) {
    const Vec3 &a = mesh.vertices[tri.v[0]], &b = mesh.vertices[tri.v[1]],
               &c = mesh.vertices[tri.v[2]];
    const Vec3 weighted = 0.5 * (b - a).cross(c - a).norm() * tri.normal;
    for (int v : tri.v) {
      auto [it, fresh] = acc.emplace(v, Vec3::Zero());
      it->second += weighted;
    }
  }
  std::vector<std::pair<int, Vec3>> out(acc.begin(), acc.end());
  std::sort(out.begin(), out.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  for (auto& [node, n] : out) n.normalize();
  return out;
}

struct AssembledSystem {
  Eigen::SparseMatrix<Complex> S;
  DofMap dof;
  double omega = 0;
  bool with_deposit = true;
  double beta = 0;         // boundary penalty actually applied
  double gauge_scale = 0;  // scale of the mean-value gauge rows
  std::uint64_t mesh_hash = 0;

  bool is_gauge_row(int i) const {
    for (int g : dof.gauge_dofs)
      if (g == i) return true;
    return false;
  }
};

namespace detail {

inline double p1_mass(int a, int b) { return a == b ? 0.1 : 0.05; }

}  // namespace detail

/// Curl-curl/mu + div-div/mu* over the whole domain, the conductor coupling
/// with the physical sign conventions, nodal A.n penalization on the domain
/// boundary and one mean-value gauge row per conductor component.
inline AssembledSystem assemble_system(const LabeledTetMesh& mesh,
                                       const MaterialTable& mat, double omega,
                                       bool with_deposit) {
  mat.validate();
  if (!(omega > 0)) throw AssemblyError("frequency must be positive");

  AssembledSystem sys;
  sys.dof = build_dofmap(mesh, mat, with_deposit);
  sys.omega = omega;
  sys.with_deposit = with_deposit;
  sys.mesh_hash = mesh.hash();
  const int N = sys.dof.size();

  std::vector<Eigen::Triplet<Complex>> trip;
  trip.reserve(static_cast<std::size_t>(mesh.tet_count()) * 200);
  Eigen::VectorXd a_diag = Eigen::VectorXd::Zero(3 * sys.dof.n_nodes);

  const Vec3 unit[3] = {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
  for (int t = 0; t < mesh.tet_count(); ++t) {
    const Region label = mesh.labels[t];
    const double mu = mat.mu_of(label, with_deposit);
    const double sigma = mat.sigma_of(label, with_deposit);
    const auto geo = element_geometry(mesh, t);
    const double vol = geo.vol;
    const auto& k = mesh.tets[t];

    std::array<std::array<Vec3, 3>, 4> curl;  // curl(lambda_a e_c)
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 3; ++c) curl[a][c] = geo.grad[a].cross(unit[c]);

    const Complex mass_factor = -I * omega * sigma;
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 3; ++c) {
        const int row = sys.dof.a_dof(k[a], c);
        for (int b = 0; b < 4; ++b)
          for (int d = 0; d < 3; ++d) {
            const int col = sys.dof.a_dof(k[b], d);
            Complex val = vol * (curl[a][c].dot(curl[b][d]) / mu +
                                 geo.grad[a][c] * geo.grad[b][d] / mat.mu_star);
            if (sigma > 0)
              val += mass_factor * vol * detail::p1_mass(a, b) * (c == d ? 1.0 : 0.0);
            trip.emplace_back(row, col, val);
            if (row == col) a_diag[row] += std::abs(val);
          }
      }
    if (sigma > 0) {
      for (int a = 0; a < 4; ++a) {
        const int vrow = sys.dof.v_dof[k[a]];
        for (int b = 0; b < 4; ++b) {
          for (int c = 0; c < 3; ++c) {
            trip.emplace_back(sys.dof.a_dof(k[a], c), sys.dof.v_dof[k[b]],
                              mass_factor * (vol / 4.0) * geo.grad[b][c]);
            trip.emplace_back(vrow, sys.dof.a_dof(k[b], c),
                              mass_factor * (vol / 4.0) * geo.grad[a][c]);
          }
          trip.emplace_back(vrow, sys.dof.v_dof[k[b]],
                            mass_factor * vol * geo.grad[a].dot(geo.grad[b]));
        }
      }
    }
  }

  const double maxdiag = a_diag.size() ? a_diag.maxCoeff() : 1.0;
  sys.beta = 1e8 * maxdiag;
  sys.gauge_scale = maxdiag;

  for (const auto& [node, n] : nodal_boundary_normals(mesh))
    for (int c = 0; c < 3; ++c)
      for (int d = 0; d < 3; ++d)
        trip.emplace_back(sys.dof.a_dof(node, c), sys.dof.a_dof(node, d),
                          Complex(sys.beta * n[c] * n[d], 0.0));

  // replace one scalar row per component by the scaled mean-value gauge
  std::vector<char> is_gauge(N, 0);
  for (int g : sys.dof.gauge_dofs) is_gauge[g] = 1;
  std::erase_if(trip, [&](const Eigen::Triplet<Complex>& e) {
    return is_gauge[e.row()];
  });
  for (int comp = 0; comp < sys.dof.n_components; ++comp) {
    const auto& dofs = sys.dof.component_dofs[comp];
    const double w = sys.gauge_scale / static_cast<double>(dofs.size());
    for (int d : dofs)
      trip.emplace_back(sys.dof.gauge_dofs[comp], d, Complex(w, 0.0));
  }

  sys.S.resize(N, N);
  sys.S.setFromTriplets(trip.begin(), trip.end());
  sys.S.makeCompressed();
  return sys;
}

/// Forward right-hand side: the coil drive tested against the vector basis.
/// Scalar rows are exactly zero because the source support is insulating.
inline Eigen::VectorXcd assemble_forward_rhs(const AssembledSystem& sys,
                                             const LabeledTetMesh& mesh,
                                             const SourceField& src) {
  Eigen::VectorXcd b = Eigen::VectorXcd::Zero(sys.dof.size());
  for (std::size_t e = 0; e < src.elements.size(); ++e) {
    const int t = src.elements[e];
    if (mesh.labels[t] != Region::Source ||
        sys.dof.v_dof[mesh.tets[t][0]] >= 0)
      throw ContractError("source support overlaps the conductor");
    const double vol = mesh.tet_volume(t);
    const Vec3 JK = src.magnitude * src.direction[e];
    for (int a = 0; a < 4; ++a)
      for (int c = 0; c < 3; ++c)
        b[sys.dof.a_dof(mesh.tets[t][a], c)] += vol / 4.0 * JK[c];
  }
  return b;
}

/// Conductor part of the assembled sesquilinear form evaluated at a discrete
/// field: (1/i omega) int sigma |i omega A + grad V|^2 via the element
/// matrices. A carries 3 entries per node, V is physical (per scalar dof).
inline Complex conductor_quadratic_form(const LabeledTetMesh& mesh,
                                        const MaterialTable& mat, double omega,
                                        bool with_deposit, const DofMap& dof,
                                        const Eigen::VectorXcd& A,
                                        const Eigen::VectorXcd& V) {
  Complex acc = 0;
  for (int t = 0; t < mesh.tet_count(); ++t) {
    const double sigma = mat.sigma_of(mesh.labels[t], with_deposit);
    if (sigma <= 0) continue;
    const auto geo = element_geometry(mesh, t);
    const auto& k = mesh.tets[t];
    // u = A + grad v (v = V / (i omega)); form value = -i omega sigma <u, conj u>
    std::array<CVec3, 4> a_node;
    CVec3 grad_v = CVec3::Zero();
    for (int a = 0; a < 4; ++a) {
      a_node[a] = CVec3(A[3 * k[a]], A[3 * k[a] + 1], A[3 * k[a] + 2]);
      const Complex v = V[dof.v_dof[k[a]] - dof.scalar_base()] / (I * omega);
      grad_v += v * geo.grad[a].cast<Complex>();
    }
    Complex cell = 0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        cell += detail::p1_mass(a, b) * cdot(a_node[a], a_node[b].conjugate());
    CVec3 a_mean = 0.25 * (a_node[0] + a_node[1] + a_node[2] + a_node[3]);
    cell += cdot(a_mean, grad_v.conjugate()) + cdot(grad_v, a_mean.conjugate());
    cell += cdot(grad_v, grad_v.conjugate());
    acc += -I * omega * sigma * geo.vol * cell;
  }
  return acc;
}

inline void write_matrix_dump(const AssembledSystem& sys, std::ostream& out) {
  for (int col = 0; col < sys.S.outerSize(); ++col)
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(sys.S, col); it; ++it) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%ld %ld %.17g %.17g\n", long(it.row()),
                    long(it.col()), it.value().real(), it.value().imag());
      out << buf;
    }
}

}  // namespace eddy
