#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "eddy/types.hpp"

namespace eddy {

enum class Region : std::uint8_t { Source = 0, Tube, Deposit, Vacuum, Plate };
inline constexpr int kRegionCount = 5;

inline const char* region_name(Region r) {
  switch (r) {
    case Region::Source: return "source";
    case Region::Tube: return "tube";
    case Region::Deposit: return "deposit";
    case Region::Vacuum: return "vacuum";
    case Region::Plate: return "plate";
  }
  return "?";
}

inline bool region_from_name(const std::string& s, Region& out) {
  for (int i = 0; i < kRegionCount; ++i) {
    if (s == region_name(static_cast<Region>(i))) {
      out = static_cast<Region>(i);
      return true;
    }
  }
  return false;
}

/// Conductor regions in the labeled sense (deposit counted as conductor).
inline bool is_conductor_label(Region r) {
  return r == Region::Tube || r == Region::Deposit || r == Region::Plate;
}

struct BoundaryTri {
  std::array<int, 3> v;
  Vec3 normal = Vec3::Zero();  // outward, set by finalize()
};

namespace detail {

struct UnionFind {
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<int> parent;
};

inline std::array<int, 3> sorted_tri(int a, int b, int c) {
  std::array<int, 3> t{a, b, c};
  std::sort(t.begin(), t.end());
  return t;
}

struct TriHash {
  std::size_t operator()(const std::array<int, 3>& t) const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (int v : t) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 0x100000001b3ull;
    }
    return static_cast<std::size_t>(h);
  }
};

// local face opposite to vertex i of tet (v0,v1,v2,v3)
inline constexpr int kTetFace[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};

}  // namespace detail

struct LabeledTetMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<Region> labels;
  std::vector<BoundaryTri> boundary;
  std::map<std::string, double> metadata;  // optional, from '#' header comments

  // filled by finalize()
  std::vector<int> conductor_component;  // per node, -1 outside the labeled conductor
  int n_conductor_components = 0;

  int node_count() const { return static_cast<int>(vertices.size()); }
  int tet_count() const { return static_cast<int>(tets.size()); }

  std::array<Vec3, 4> tet_vertices(int t) const {
    const auto& k = tets[t];
    return {vertices[k[0]], vertices[k[1]], vertices[k[2]], vertices[k[3]]};
  }

  double tet_signed_volume(int t) const {
    const auto v = tet_vertices(t);
    return (v[1] - v[0]).cross(v[2] - v[0]).dot(v[3] - v[0]) / 6.0;
  }

  double tet_volume(int t) const { return std::abs(tet_signed_volume(t)); }

  Vec3 tet_centroid(int t) const {
    const auto v = tet_vertices(t);
    return 0.25 * (v[0] + v[1] + v[2] + v[3]);
  }

  double region_volume(Region r) const {
    double vol = 0.0;
    for (int t = 0; t < tet_count(); ++t)
      if (labels[t] == r) vol += tet_volume(t);
    return vol;
  }

  std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    if (!vertices.empty())
      h = fnv1a(vertices.data(), vertices.size() * sizeof(Vec3), h);
    if (!tets.empty()) h = fnv1a(tets.data(), tets.size() * sizeof(tets[0]), h);
    if (!labels.empty()) h = fnv1a(labels.data(), labels.size(), h);
    return h;
  }

  /// Validates volumes and index ranges, orients boundary normals outward,
  /// and rebuilds the conductor connected components. Idempotent; must be
  /// called after any label or vertex change.
  void finalize() {
    const int nv = node_count();
    if (tets.size() != labels.size())
      throw GeometryError("label count does not match tetrahedron count");
    for (int t = 0; t < tet_count(); ++t) {
      for (int i = 0; i < 4; ++i)
        if (tets[t][i] < 0 || tets[t][i] >= nv)
          throw GeometryError("tetrahedron vertex index out of range");
      if (tet_signed_volume(t) <= 0.0)
        throw GeometryError("tetrahedron " + std::to_string(t) +
                            " has non-positive volume");
    }

    // facet -> owner tets (boundary facets have exactly one)
    std::unordered_map<std::array<int, 3>, int, detail::TriHash> owner;
    owner.reserve(tets.size() * 4);
    for (int t = 0; t < tet_count(); ++t)
      for (int f = 0; f < 4; ++f) {
        auto key = detail::sorted_tri(tets[t][detail::kTetFace[f][0]],
                                      tets[t][detail::kTetFace[f][1]],
                                      tets[t][detail::kTetFace[f][2]]);
        auto [it, fresh] = owner.emplace(key, t);
        if (!fresh) it->second = -1;  // interior
      }
    for (auto& tri : boundary) {
      for (int i = 0; i < 3; ++i)
        if (tri.v[i] < 0 || tri.v[i] >= nv)
          throw GeometryError("boundary vertex index out of range");
      auto it = owner.find(detail::sorted_tri(tri.v[0], tri.v[1], tri.v[2]));
      if (it == owner.end() || it->second < 0)
        throw GeometryError("boundary triangle is not a surface facet");
      Vec3 n = (vertices[tri.v[1]] - vertices[tri.v[0]])
                   .cross(vertices[tri.v[2]] - vertices[tri.v[0]]);
      const Vec3 fc =
          (vertices[tri.v[0]] + vertices[tri.v[1]] + vertices[tri.v[2]]) / 3.0;
      if (n.dot(fc - tet_centroid(it->second)) < 0.0) n = -n;
      tri.normal = n.normalized();
    }

    detail::UnionFind uf(nv);
    for (int t = 0; t < tet_count(); ++t) {
      if (!is_conductor_label(labels[t])) continue;
      for (int i = 1; i < 4; ++i) uf.unite(tets[t][0], tets[t][i]);
    }
    std::vector<char> in_conductor(nv, 0);
    for (int t = 0; t < tet_count(); ++t)
      if (is_conductor_label(labels[t]))
        for (int i = 0; i < 4; ++i) in_conductor[tets[t][i]] = 1;
    conductor_component.assign(nv, -1);
    std::unordered_map<int, int> root_to_comp;
    for (int v = 0; v < nv; ++v) {
      if (!in_conductor[v]) continue;
      const int root = uf.find(v);
      auto [it, fresh] =
          root_to_comp.emplace(root, static_cast<int>(root_to_comp.size()));
      conductor_component[v] = it->second;
    }
    n_conductor_components = static_cast<int>(root_to_comp.size());
  }
};

// ---------------------------------------------------------------------------
// Structured tube mesh generator
// ---------------------------------------------------------------------------

struct PlateSpec {
  bool enabled = false;
  double r_in = 0, r_out = 0;
  double z_min = 0, z_max = 0;
  int openings = 0;               // angular gaps left open (vacuum)
  double opening_width_deg = 45;  // width of each opening, centered per opening
};

struct TubeMeshSpec {
  double tube_r_in = 9.84;
  double tube_r_out = 11.11;
  double coil_r_in = 7.83;
  double coil_r_out = 8.50;
  double domain_radius = 24.0;
  double z_min = 0.0, z_max = 30.0;
  int sectors = 12;
  double shell_hbar = 0.5;
  int shells = 3;
  std::vector<double> z_planes_required;  // coil caps, grid slab bounds, ...
  double axial_step = 1.0;                // max spacing between z planes
  int inner_rings = 4;  // radial intervals from axis to coil_r_in
  int gap_rings = 1;    // coil_r_out -> tube_r_in
  int tube_rings = 2;   // across the tube wall
  int outer_rings = 4;  // outermost shell -> domain_radius
  PlateSpec plate;
};

namespace detail {

// Splits prism (b0,b1,b2 | t0,t1,t2) into 3 tets, choosing each vertical quad
// diagonal through its smallest global vertex index so adjacent prisms match.
inline void prism_to_tets(const std::array<int, 3>& b, const std::array<int, 3>& t,
                          std::vector<std::array<int, 4>>& out) {
  // d[i] = 0: diagonal (b[i], t[i+1]);  d[i] = 1: diagonal (b[i+1], t[i])
  int d[3];
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3;
    const int m = std::min(std::min(b[i], b[j]), std::min(t[i], t[j]));
    d[i] = (m == b[i] || m == t[j]) ? 0 : 1;
  }
  int apex = -1;
  for (int i = 0; i < 3; ++i)
    if (d[i] == 0 && d[(i + 2) % 3] == 1) apex = i;
  if (apex < 0) throw GeometryError("prism split produced a cyclic pattern");
  const int p = apex, q = (apex + 1) % 3, r = (apex + 2) % 3;
  if (d[q] == 0) {
    out.push_back({b[p], b[q], b[r], t[r]});
    out.push_back({b[p], b[q], t[q], t[r]});
    out.push_back({b[p], t[p], t[q], t[r]});
  } else {
    out.push_back({b[p], b[q], b[r], t[q]});
    out.push_back({b[p], b[r], t[q], t[r]});
    out.push_back({b[p], t[p], t[q], t[r]});
  }
}

inline void append_unique_sorted(std::vector<double>& v, double tol) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end(),
                      [tol](double a, double b) { return std::abs(a - b) < tol; }),
          v.end());
}

}  // namespace detail

inline LabeledTetMesh generate_tube_mesh(const TubeMeshSpec& spec) {
  const double two_pi = 2.0 * std::numbers::pi;
  if (!(spec.coil_r_in > 0 && spec.coil_r_in < spec.coil_r_out &&
        spec.coil_r_out < spec.tube_r_in && spec.tube_r_in < spec.tube_r_out))
    throw GeometryError("radii must satisfy 0 < coil_in < coil_out < tube_in < tube_out");
  const double shell_top = spec.tube_r_out + spec.shells * spec.shell_hbar;
  if (!(shell_top < spec.domain_radius))
    throw GeometryError("domain radius must exceed the outermost deposit shell");
  if (!(spec.z_max > spec.z_min)) throw GeometryError("degenerate axial extent");
  if (spec.sectors < 3) throw GeometryError("need at least 3 sectors");
  if (spec.shell_hbar <= 0 || spec.shells < 0)
    throw GeometryError("invalid shell ladder");
  if (spec.inner_rings < 1 || spec.gap_rings < 1 || spec.tube_rings < 1 ||
      spec.outer_rings < 1)
    throw GeometryError("ring subdivision counts must be positive");
  if (spec.axial_step <= 0) throw GeometryError("axial step must be positive");
  if (spec.plate.enabled) {
    if (!(spec.plate.r_in >= shell_top - 1e-12 && spec.plate.r_out > spec.plate.r_in &&
          spec.plate.r_out <= spec.domain_radius + 1e-12))
      throw GeometryError("plate radii must lie between the shell ladder and the domain radius");
    if (!(spec.plate.z_min >= spec.z_min && spec.plate.z_max > spec.plate.z_min &&
          spec.plate.z_max <= spec.z_max))
      throw GeometryError("plate axial extent outside domain");
  }

  // radial ring ladder (axis excluded; ring 0 is the innermost circle)
  std::vector<double> rings;
  for (int i = 1; i <= spec.inner_rings; ++i)
    rings.push_back(spec.coil_r_in * i / spec.inner_rings);
  rings.push_back(spec.coil_r_out);
  for (int i = 1; i <= spec.gap_rings; ++i)
    rings.push_back(spec.coil_r_out +
                    (spec.tube_r_in - spec.coil_r_out) * i / spec.gap_rings);
  for (int i = 1; i <= spec.tube_rings; ++i)
    rings.push_back(spec.tube_r_in +
                    (spec.tube_r_out - spec.tube_r_in) * i / spec.tube_rings);
  for (int j = 1; j <= spec.shells; ++j)
    rings.push_back(spec.tube_r_out + j * spec.shell_hbar);
  if (spec.plate.enabled) {
    rings.push_back(spec.plate.r_in);
    rings.push_back(spec.plate.r_out);
  }
  const double ratio = spec.domain_radius / shell_top;
  for (int i = 1; i <= spec.outer_rings; ++i)
    rings.push_back(shell_top * std::pow(ratio, double(i) / spec.outer_rings));
  detail::append_unique_sorted(rings, 1e-9);

  // z planes: required planes plus subdivision to the axial step
  std::vector<double> planes{spec.z_min, spec.z_max};
  for (double z : spec.z_planes_required) {
    if (z < spec.z_min - 1e-9 || z > spec.z_max + 1e-9)
      throw GeometryError("required z plane outside the domain");
    planes.push_back(std::clamp(z, spec.z_min, spec.z_max));
  }
  if (spec.plate.enabled) {
    planes.push_back(spec.plate.z_min);
    planes.push_back(spec.plate.z_max);
  }
  detail::append_unique_sorted(planes, 1e-9);
  {
    std::vector<double> dense;
    for (std::size_t i = 0; i + 1 < planes.size(); ++i) {
      dense.push_back(planes[i]);
      const double gap = planes[i + 1] - planes[i];
      const int parts = std::max(1, static_cast<int>(std::ceil(gap / spec.axial_step - 1e-9)));
      for (int k = 1; k < parts; ++k) dense.push_back(planes[i] + gap * k / parts);
    }
    dense.push_back(planes.back());
    planes = std::move(dense);
  }

  const int R = static_cast<int>(rings.size());
  const int S = spec.sectors;
  const int L = static_cast<int>(planes.size());
  const int per_level = 1 + R * S;

  LabeledTetMesh mesh;
  mesh.vertices.reserve(static_cast<std::size_t>(per_level) * L);
  for (int l = 0; l < L; ++l) {
    mesh.vertices.emplace_back(0.0, 0.0, planes[l]);
    for (int r = 0; r < R; ++r)
      for (int s = 0; s < S; ++s) {
        const double phi = two_pi * s / S;
        mesh.vertices.emplace_back(rings[r] * std::cos(phi),
                                   rings[r] * std::sin(phi), planes[l]);
      }
  }
  auto axis_node = [&](int l) { return l * per_level; };
  auto node = [&](int l, int r, int s) {
    return l * per_level + 1 + r * S + (s % S);
  };

  // per-(ring interval, sector, z interval) classification
  auto classify = [&](int ring_hi, int s, int l) -> Region {
    const double r_out = rings[ring_hi];
    if (r_out <= spec.tube_r_in + 1e-9) return Region::Source;
    if (r_out <= spec.tube_r_out + 1e-9) return Region::Tube;
    if (spec.plate.enabled) {
      const double r_in = ring_hi == 0 ? 0.0 : rings[ring_hi - 1];
      const double zc = 0.5 * (planes[l] + planes[l + 1]);
      if (r_in >= spec.plate.r_in - 1e-9 && r_out <= spec.plate.r_out + 1e-9 &&
          zc > spec.plate.z_min && zc < spec.plate.z_max) {
        bool in_opening = false;
        if (spec.plate.openings > 0) {
          const double phic = two_pi * (s + 0.5) / S;
          const double half = 0.5 * spec.plate.opening_width_deg * std::numbers::pi / 180.0;
          for (int o = 0; o < spec.plate.openings; ++o) {
            const double center = two_pi * (o + 0.5) / spec.plate.openings;
            double d = std::remainder(phic - center, two_pi);
            if (std::abs(d) < half) in_opening = true;
          }
        }
        if (!in_opening) return Region::Plate;
      }
    }
    return Region::Vacuum;
  };

  std::vector<std::array<int, 4>> cell_tets;
  for (int l = 0; l + 1 < L; ++l) {
    for (int s = 0; s < S; ++s) {
      // axis wedge
      cell_tets.clear();
      detail::prism_to_tets({axis_node(l), node(l, 0, s), node(l, 0, s + 1)},
                            {axis_node(l + 1), node(l + 1, 0, s), node(l + 1, 0, s + 1)},
                            cell_tets);
      for (auto& k : cell_tets) {
        mesh.tets.push_back(k);
        mesh.labels.push_back(classify(0, s, l));
      }
      // ring cells: quad cross-section split along the (r,s)->(r+1,s+1) diagonal
      for (int r = 0; r + 1 < R; ++r) {
        cell_tets.clear();
        detail::prism_to_tets(
            {node(l, r, s), node(l, r + 1, s), node(l, r + 1, s + 1)},
            {node(l + 1, r, s), node(l + 1, r + 1, s), node(l + 1, r + 1, s + 1)},
            cell_tets);
        detail::prism_to_tets(
            {node(l, r, s), node(l, r + 1, s + 1), node(l, r, s + 1)},
            {node(l + 1, r, s), node(l + 1, r + 1, s + 1), node(l + 1, r, s + 1)},
            cell_tets);
        for (auto& k : cell_tets) {
          mesh.tets.push_back(k);
          mesh.labels.push_back(classify(r + 1, s, l));
        }
      }
    }
  }

  // fix orientation (prism split does not promise a sign)
  for (auto& k : mesh.tets) {
    const Vec3& a = mesh.vertices[k[0]];
    const double vol = (mesh.vertices[k[1]] - a)
                           .cross(mesh.vertices[k[2]] - a)
                           .dot(mesh.vertices[k[3]] - a);
    if (vol < 0) std::swap(k[2], k[3]);
  }

  // boundary facets = facets owned by exactly one tet
  std::unordered_map<std::array<int, 3>, int, detail::TriHash> count;
  count.reserve(mesh.tets.size() * 4);
  for (const auto& k : mesh.tets)
    for (int f = 0; f < 4; ++f)
      count[detail::sorted_tri(k[detail::kTetFace[f][0]], k[detail::kTetFace[f][1]],
                               k[detail::kTetFace[f][2]])]++;
  for (const auto& k : mesh.tets)
    for (int f = 0; f < 4; ++f) {
      auto key = detail::sorted_tri(k[detail::kTetFace[f][0]],
                                    k[detail::kTetFace[f][1]],
                                    k[detail::kTetFace[f][2]]);
      if (count[key] == 1) {
        mesh.boundary.push_back({{key[0], key[1], key[2]}, Vec3::Zero()});
        count[key] = 2;  // emit once
      }
    }

  mesh.finalize();
  return mesh;
}

// ---------------------------------------------------------------------------
// Deposit/vacuum interface
// ---------------------------------------------------------------------------

struct InterfaceTri {
  std::array<int, 3> v;
  double area = 0;
  Vec3 normal = Vec3::Zero();  // outward from the deposit
  Vec3 centroid = Vec3::Zero();
  int tet_deposit = -1, tet_vacuum = -1;
  int layer = -1, sector = -1;  // grid cell, set by bind_to_grid
  bool lateral = false;         // radially-facing facet
};

struct InterfaceGamma {
  std::vector<InterfaceTri> tris;
  double total_area() const {
    double a = 0;
    for (const auto& t : tris) a += t.area;
    return a;
  }
};

inline InterfaceGamma extract_interface(const LabeledTetMesh& mesh) {
  std::unordered_map<std::array<int, 3>, std::array<int, 2>, detail::TriHash> facets;
  facets.reserve(mesh.tets.size());
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Deposit && mesh.labels[t] != Region::Vacuum)
      continue;
    for (int f = 0; f < 4; ++f) {
      auto key = detail::sorted_tri(mesh.tets[t][detail::kTetFace[f][0]],
                                    mesh.tets[t][detail::kTetFace[f][1]],
                                    mesh.tets[t][detail::kTetFace[f][2]]);
      auto [it, fresh] = facets.emplace(key, std::array<int, 2>{t, -1});
      if (!fresh) it->second[1] = t;
    }
  }
  // deterministic order: iterate tets, not the hash map
  InterfaceGamma gamma;
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Deposit) continue;
    for (int f = 0; f < 4; ++f) {
      auto key = detail::sorted_tri(mesh.tets[t][detail::kTetFace[f][0]],
                                    mesh.tets[t][detail::kTetFace[f][1]],
                                    mesh.tets[t][detail::kTetFace[f][2]]);
      const auto it = facets.find(key);
      const auto& pair = it->second;
      const int other = pair[0] == t ? pair[1] : pair[0];
      if (other < 0 || mesh.labels[other] != Region::Vacuum) continue;
      InterfaceTri tri;
      tri.v = key;
      tri.tet_deposit = t;
      tri.tet_vacuum = other;
      const Vec3 &a = mesh.vertices[key[0]], &b = mesh.vertices[key[1]],
                 &c = mesh.vertices[key[2]];
      Vec3 n = (b - a).cross(c - a);
      tri.area = 0.5 * n.norm();
      tri.centroid = (a + b + c) / 3.0;
      if (n.dot(tri.centroid - mesh.tet_centroid(t)) < 0) n = -n;
      tri.normal = n.normalized();
      gamma.tris.push_back(tri);
    }
  }
  return gamma;
}

// ---------------------------------------------------------------------------
// Fixed reconstruction grid
// ---------------------------------------------------------------------------

struct FixedGrid {
  double hbar = 0.5;
  int layers = 1;
  int sectors = 1;
  int max_shells = 1;
  double z0 = 0, z1 = 1;
  double r_base = 0;  // inner radius of the first shell (tube exterior)
  // cells[n*sectors+s][shell] -> candidate tet ids, radially ordered
  std::vector<std::vector<std::vector<int>>> cells;

  double slab_height() const { return (z1 - z0) / layers; }
  double Lmax() const { return max_shells * hbar; }
  int cell_index(int n, int s) const { return n * sectors + s; }
};

inline FixedGrid build_fixed_grid(const LabeledTetMesh& mesh, double hbar,
                                  int layers, int sectors, double z0, double z1,
                                  double r_base, int max_shells) {
  if (hbar <= 0 || layers < 1 || sectors < 1 || max_shells < 1 || z1 <= z0)
    throw GeometryError("invalid fixed-grid parameters");
  FixedGrid g;
  g.hbar = hbar;
  g.layers = layers;
  g.sectors = sectors;
  g.max_shells = max_shells;
  g.z0 = z0;
  g.z1 = z1;
  g.r_base = r_base;
  g.cells.assign(static_cast<std::size_t>(layers) * sectors,
                 std::vector<std::vector<int>>(max_shells));
  const double two_pi = 2.0 * std::numbers::pi;
  const double slab = g.slab_height();
  const double rtol = 0.25 * hbar;
  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Vacuum && mesh.labels[t] != Region::Deposit)
      continue;
    const auto v = mesh.tet_vertices(t);
    double rmax = 0;
    for (const auto& p : v) rmax = std::max(rmax, std::hypot(p.x(), p.y()));
    if (rmax <= r_base + rtol || rmax > r_base + max_shells * hbar + rtol) continue;
    const double sreal = (rmax - r_base) / hbar;
    const int shell = static_cast<int>(std::lround(sreal)) - 1;
    if (std::abs(sreal - std::lround(sreal)) > 0.25)
      throw GeometryError("mesh does not conform to the deposit shell ladder");
    const Vec3 c = mesh.tet_centroid(t);
    if (c.z() < z0 || c.z() > z1) continue;
    double zlo = v[0].z(), zhi = v[0].z();
    for (const auto& p : v) {
      zlo = std::min(zlo, p.z());
      zhi = std::max(zhi, p.z());
    }
    const int n = std::clamp(static_cast<int>((c.z() - z0) / slab), 0, layers - 1);
    if (zlo < z0 + n * slab - 1e-9 || zhi > z0 + (n + 1) * slab + 1e-9)
      throw GeometryError("mesh does not conform to the grid slab planes");
    double phi = std::atan2(c.y(), c.x());
    if (phi < 0) phi += two_pi;
    const int s = std::clamp(static_cast<int>(phi / (two_pi / sectors)), 0,
                             sectors - 1);
    g.cells[g.cell_index(n, s)][shell].push_back(t);
  }
  for (auto& cell : g.cells)
    for (auto& shell : cell) std::sort(shell.begin(), shell.end());
  return g;
}

/// Tags interface triangles with their grid cell and marks the radially
/// facing ones (the facets that move when a cell is thickened).
inline void bind_to_grid(InterfaceGamma& gamma, const FixedGrid& grid) {
  const double two_pi = 2.0 * std::numbers::pi;
  for (auto& tri : gamma.tris) {
    const Vec3& c = tri.centroid;
    tri.layer = std::clamp(static_cast<int>((c.z() - grid.z0) / grid.slab_height()),
                           0, grid.layers - 1);
    double phi = std::atan2(c.y(), c.x());
    if (phi < 0) phi += two_pi;
    tri.sector = std::clamp(static_cast<int>(phi / (two_pi / grid.sectors)), 0,
                            grid.sectors - 1);
    const Vec3 er = Vec3(c.x(), c.y(), 0).normalized();
    tri.lateral =
        std::abs(tri.normal.z()) < 0.5 && std::abs(tri.normal.dot(er)) > 0.5;
  }
}

// ---------------------------------------------------------------------------
// Deposit parameter (thickness table on the fixed grid)
// ---------------------------------------------------------------------------

struct DepositParam {
  int layers = 0, sectors = 1;
  double hbar = 0.5;
  double Lmax = 0;
  std::vector<double> L;  // row-major [layer][sector]

  double& at(int n, int s) { return L[static_cast<std::size_t>(n) * sectors + s]; }
  double at(int n, int s) const {
    return L[static_cast<std::size_t>(n) * sectors + s];
  }
  int cell_count() const { return layers * sectors; }

  static DepositParam zeros(const FixedGrid& g) {
    DepositParam p;
    p.layers = g.layers;
    p.sectors = g.sectors;
    p.hbar = g.hbar;
    p.Lmax = g.Lmax();
    p.L.assign(static_cast<std::size_t>(g.layers) * g.sectors, 0.0);
    return p;
  }
  static DepositParam uniform(const FixedGrid& g, double value) {
    DepositParam p = zeros(g);
    std::fill(p.L.begin(), p.L.end(), value);
    return p;
  }

  std::vector<int> shell_counts() const {
    std::vector<int> n(L.size());
    for (std::size_t i = 0; i < L.size(); ++i)
      n[i] = static_cast<int>(std::lround(L[i] / hbar));
    return n;
  }

  std::uint64_t hash() const {
    auto n = shell_counts();
    std::uint64_t h = fnv1a(&layers, sizeof(layers));
    h = fnv1a(&sectors, sizeof(sectors), h);
    if (!n.empty()) h = fnv1a(n.data(), n.size() * sizeof(int), h);
    return h;
  }
};

/// Relabels the candidate tetrahedra of each grid cell: the first
/// round(L/hbar) shells become deposit, the rest vacuum. All other labels are
/// untouched. Deterministic and idempotent.
inline LabeledTetMesh realize_deposit(const LabeledTetMesh& mesh,
                                      const FixedGrid& grid,
                                      const DepositParam& L) {
  if (L.layers != grid.layers || L.sectors != grid.sectors)
    throw ContractError("deposit table does not match the grid");
  LabeledTetMesh out = mesh;
  const auto shells = L.shell_counts();
  for (int n = 0; n < grid.layers; ++n)
    for (int s = 0; s < grid.sectors; ++s) {
      const auto& cell = grid.cells[grid.cell_index(n, s)];
      const double value = L.at(n, s);
      if (value < -1e-12 || value > grid.Lmax() + 1e-9)
        throw ParameterBoundError("deposit thickness outside [0, Lmax]");
      const int want = shells[static_cast<std::size_t>(n) * grid.sectors + s];
      if (std::abs(value - want * grid.hbar) > 1e-9)
        throw ContractError("deposit thickness is not a grid multiple");
      int have = 0;
      for (const auto& shell : cell)
        if (!shell.empty()) ++have;
      if (want > have)
        throw ParameterBoundError("deposit thickness exceeds the cell shell count");
      for (int j = 0; j < static_cast<int>(cell.size()); ++j)
        for (int t : cell[j])
          out.labels[t] = j < want ? Region::Deposit : Region::Vacuum;
    }
  out.finalize();
  return out;
}

// ---------------------------------------------------------------------------
// ASCII mesh format
// ---------------------------------------------------------------------------

inline void save_mesh(const LabeledTetMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "eddymesh 1\n";
  char buf[96];
  out << "vertices " << mesh.vertices.size() << "\n";
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out << buf;
  }
  out << "tetrahedra " << mesh.tets.size() << "\n";
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& k = mesh.tets[t];
    out << k[0] << ' ' << k[1] << ' ' << k[2] << ' ' << k[3] << ' '
        << region_name(mesh.labels[t]) << "\n";
  }
  out << "boundary " << mesh.boundary.size() << "\n";
  for (const auto& tri : mesh.boundary)
    out << tri.v[0] << ' ' << tri.v[1] << ' ' << tri.v[2] << "\n";
  if (!out) throw InputError("failed writing " + path);
}

inline LabeledTetMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  LabeledTetMesh mesh;
  long lineno = 0;
  std::string line;
  auto next_line = [&](std::string& out_line) -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream meta(line.substr(1));
        std::string key1, key2;
        double value;
        if (meta >> key1 >> key2 >> value && key1 == "region-volume")
          mesh.metadata["region-volume " + key2] = value;
        continue;
      }
      out_line = line;
      return true;
    }
    return false;
  };

  std::string cur;
  if (!next_line(cur) || cur.rfind("eddymesh 1", 0) != 0)
    throw ParseError("expected header 'eddymesh 1'", lineno);

  auto expect_count = [&](const char* word) -> long {
    if (!next_line(cur)) throw ParseError(std::string("expected '") + word + " <count>'", lineno);
    std::istringstream ss(cur);
    std::string w;
    long n = -1;
    if (!(ss >> w >> n) || w != word || n < 0)
      throw ParseError(std::string("expected '") + word + " <count>'", lineno);
    return n;
  };

  const long nv = expect_count("vertices");
  mesh.vertices.reserve(nv);
  for (long i = 0; i < nv; ++i) {
    if (!next_line(cur)) throw ParseError("unexpected end of vertex list", lineno);
    std::istringstream ss(cur);
    double x, y, z;
    if (!(ss >> x >> y >> z)) throw ParseError("malformed vertex", lineno);
    mesh.vertices.emplace_back(x, y, z);
  }
  const long nt = expect_count("tetrahedra");
  mesh.tets.reserve(nt);
  mesh.labels.reserve(nt);
  for (long i = 0; i < nt; ++i) {
    if (!next_line(cur)) throw ParseError("unexpected end of tetrahedron list", lineno);
    std::istringstream ss(cur);
    std::array<int, 4> k;
    std::string label;
    if (!(ss >> k[0] >> k[1] >> k[2] >> k[3] >> label))
      throw ParseError("malformed tetrahedron", lineno);
    for (int v : k)
      if (v < 0 || v >= nv) throw ParseError("vertex index out of range", lineno);
    Region r;
    if (!region_from_name(label, r)) throw ParseError("unknown region label '" + label + "'", lineno);
    mesh.tets.push_back(k);
    mesh.labels.push_back(r);
  }
  const long nb = expect_count("boundary");
  mesh.boundary.reserve(nb);
  for (long i = 0; i < nb; ++i) {
    if (!next_line(cur)) throw ParseError("unexpected end of boundary list", lineno);
    std::istringstream ss(cur);
    std::array<int, 3> k;
    if (!(ss >> k[0] >> k[1] >> k[2])) throw ParseError("malformed boundary triangle", lineno);
    for (int v : k)
      if (v < 0 || v >= nv) throw ParseError("vertex index out of range", lineno);
    mesh.boundary.push_back({k, Vec3::Zero()});
  }
  try {
    mesh.finalize();
  } catch (const GeometryError& e) {
    throw ParseError(e.what(), lineno);
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// Uniform (red) refinement
// ---------------------------------------------------------------------------

inline LabeledTetMesh uniform_refine(const LabeledTetMesh& mesh) {
  LabeledTetMesh out;
  out.vertices = mesh.vertices;
  std::unordered_map<std::uint64_t, int> midpoint;
  midpoint.reserve(mesh.tets.size() * 4);
  auto mid = [&](int a, int b) -> int {
    if (a > b) std::swap(a, b);
    const std::uint64_t key =
        (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    auto it = midpoint.find(key);
    if (it != midpoint.end()) return it->second;
    const int id = static_cast<int>(out.vertices.size());
    out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    midpoint.emplace(key, id);
    return id;
  };
  out.tets.reserve(mesh.tets.size() * 8);
  out.labels.reserve(mesh.tets.size() * 8);
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    const auto& k = mesh.tets[t];
    const int m01 = mid(k[0], k[1]), m02 = mid(k[0], k[2]), m03 = mid(k[0], k[3]),
              m12 = mid(k[1], k[2]), m13 = mid(k[1], k[3]), m23 = mid(k[2], k[3]);
    const std::array<std::array<int, 4>, 8> kids = {{
        {k[0], m01, m02, m03},
        {m01, k[1], m12, m13},
        {m02, m12, k[2], m23},
        {m03, m13, m23, k[3]},
        {m01, m02, m03, m13},
        {m01, m02, m12, m13},
        {m02, m03, m13, m23},
        {m02, m12, m13, m23},
    }};
    for (auto kid : kids) {
      const Vec3& a = out.vertices[kid[0]];
      const double vol = (out.vertices[kid[1]] - a)
                             .cross(out.vertices[kid[2]] - a)
                             .dot(out.vertices[kid[3]] - a);
      if (vol < 0) std::swap(kid[2], kid[3]);
      out.tets.push_back(kid);
      out.labels.push_back(mesh.labels[t]);
    }
  }
  out.boundary.reserve(mesh.boundary.size() * 4);
  for (const auto& tri : mesh.boundary) {
    const int a = tri.v[0], b = tri.v[1], c = tri.v[2];
    const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
    out.boundary.push_back({{a, ab, ca}, Vec3::Zero()});
    out.boundary.push_back({{ab, b, bc}, Vec3::Zero()});
    out.boundary.push_back({{ca, bc, c}, Vec3::Zero()});
    out.boundary.push_back({{ab, bc, ca}, Vec3::Zero()});
  }
  out.finalize();
  return out;
}

}  // namespace eddy
