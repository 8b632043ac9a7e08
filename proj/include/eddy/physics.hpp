#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "eddy/mesh.hpp"
#include "eddy/quadrature.hpp"
#include "eddy/types.hpp"

namespace eddy {

/// Per-region permeability/conductivity. The deposit-free coefficients mu0,
/// sigma0 equal the with-deposit ones except on the deposit region, where the
/// material reverts to vacuum (sigma0 exactly 0 there).
struct MaterialTable {
  double mu[kRegionCount] = {};
  double sigma[kRegionCount] = {};
  double mu_star = 0;  // gauge penalization constant

  double mu_of(Region r, bool with_deposit) const {
    if (!with_deposit && r == Region::Deposit)
      return mu[static_cast<int>(Region::Vacuum)];
    return mu[static_cast<int>(r)];
  }
  double sigma_of(Region r, bool with_deposit) const {
    if (!with_deposit && r == Region::Deposit) return 0.0;
    return sigma[static_cast<int>(r)];
  }
  bool is_conductor(Region r, bool with_deposit) const {
    return sigma_of(r, with_deposit) > 0.0;
  }

  // jumps across Gamma, deposit value minus deposit-free value
  double jump_inv_mu() const {
    return 1.0 / mu_of(Region::Deposit, true) - 1.0 / mu_of(Region::Deposit, false);
  }
  double jump_mu() const {
    return mu_of(Region::Deposit, true) - mu_of(Region::Deposit, false);
  }
  double jump_sigma() const { return sigma_of(Region::Deposit, true); }

  void validate() const {
    for (int i = 0; i < kRegionCount; ++i) {
      if (!(mu[i] > 0)) throw AssemblyError("permeability must be positive");
      if (sigma[i] < 0) throw AssemblyError("conductivity must be nonnegative");
    }
    if (sigma[static_cast<int>(Region::Source)] != 0.0 ||
        sigma[static_cast<int>(Region::Vacuum)] != 0.0)
      throw AssemblyError("insulator regions must have zero conductivity");
    if (!(mu_star > 0)) throw AssemblyError("gauge constant must be positive");
  }
};

struct CoilConfig {
  double r_in = 7.83, r_out = 8.50;
  double length = 2.0;
  double gap = 0.5;       // axial separation between the two coils
  double current = 1.0;   // |J|

  // coil k in {1,2}: axial range relative to the probe center zeta
  std::pair<double, double> z_range(int k, double zeta) const {
    if (k == 1) return {zeta - 0.5 * gap - length, zeta - 0.5 * gap};
    if (k == 2) return {zeta + 0.5 * gap, zeta + 0.5 * gap + length};
    throw ContractError("coil index must be 1 or 2; one coil per solve");
  }
  // all cap planes over a set of probe positions (mesh must resolve them)
  std::vector<double> cap_planes(const std::vector<double>& zetas) const {
    std::vector<double> planes;
    for (double z : zetas)
      for (int k = 1; k <= 2; ++k) {
        auto [a, b] = z_range(k, z);
        planes.push_back(a);
        planes.push_back(b);
      }
    return planes;
  }
};

enum class Mode { FA, F3 };

inline const char* mode_name(Mode m) { return m == Mode::FA ? "FA" : "F3"; }

struct ScanConfig {
  double zeta_min = 5.0, zeta_max = 24.0, step = 1.0;
  Mode mode = Mode::FA;

  std::vector<double> positions() const {
    if (!(step > 0) || zeta_max < zeta_min - 1e-12)
      throw InputError("scan positions must be strictly increasing");
    std::vector<double> z;
    for (double v = zeta_min; v <= zeta_max + 1e-9; v += step) z.push_back(v);
    return z;
  }
};

// ---------------------------------------------------------------------------
// Whole-run configuration (key = value file per the documented key set)
// ---------------------------------------------------------------------------

struct GridConfig {
  double hbar = 0.5;
  int layers = 20;
  int sectors = 1;
  int max_shells = 3;
  double z_min = 0, z_max = 30;  // slab extent
};

struct MeshConfig {
  int sectors = 12;
  double axial_step = 1.0;
  int inner_rings = 4, gap_rings = 1, tube_rings = 2, outer_rings = 4;
};

struct Config {
  double omega = 200.0 * std::numbers::pi;
  MaterialTable materials;
  CoilConfig coils;
  ScanConfig scan;
  GridConfig grid;
  MeshConfig mesh;
  double tube_r_in = 9.84, tube_r_out = 11.11;
  double domain_radius = 24.0;
  double domain_z_min = 0.0, domain_z_max = 30.0;
  PlateSpec plate;

  TubeMeshSpec mesh_spec() const {
    TubeMeshSpec s;
    s.tube_r_in = tube_r_in;
    s.tube_r_out = tube_r_out;
    s.coil_r_in = coils.r_in;
    s.coil_r_out = coils.r_out;
    s.domain_radius = domain_radius;
    s.z_min = domain_z_min;
    s.z_max = domain_z_max;
    s.sectors = mesh.sectors;
    s.shell_hbar = grid.hbar;
    s.shells = grid.max_shells;
    s.axial_step = mesh.axial_step;
    s.inner_rings = mesh.inner_rings;
    s.gap_rings = mesh.gap_rings;
    s.tube_rings = mesh.tube_rings;
    s.outer_rings = mesh.outer_rings;
    s.plate = plate;
    s.z_planes_required = coils.cap_planes(scan.positions());
    const double slab = (grid.z_max - grid.z_min) / grid.layers;
    for (int n = 0; n <= grid.layers; ++n)
      s.z_planes_required.push_back(grid.z_min + n * slab);
    return s;
  }

  FixedGrid make_grid(const LabeledTetMesh& m) const {
    return build_fixed_grid(m, grid.hbar, grid.layers, grid.sectors, grid.z_min,
                            grid.z_max, tube_r_out, grid.max_shells);
  }
};

/// Material, frequency, coil and scan values as reported for the reference
/// steam-generator configuration.
inline Config paper_defaults() {
  Config c;
  const double mu0 = std::numbers::pi * 1e-6;
  c.omega = 200.0 * std::numbers::pi;
  auto set = [&](Region r, double mu, double sigma) {
    c.materials.mu[static_cast<int>(r)] = mu;
    c.materials.sigma[static_cast<int>(r)] = sigma;
  };
  set(Region::Source, mu0, 0.0);
  set(Region::Vacuum, mu0, 0.0);
  set(Region::Tube, 1.01 * mu0, 1e3);
  set(Region::Plate, mu0, 1e2);
  set(Region::Deposit, mu0, 1e3);
  c.materials.mu_star = mu0;
  c.coils = CoilConfig{};
  c.scan = ScanConfig{};
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

struct KeyValueFile {
  std::map<std::string, std::string> values;
  std::map<std::string, long> lines;

  static KeyValueFile parse(std::istream& in) {
    KeyValueFile kv;
    std::string line;
    long lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError("expected 'key = value'", lineno);
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty() || value.empty())
        throw ParseError("expected 'key = value'", lineno);
      kv.values[key] = value;
      kv.lines[key] = lineno;
    }
    return kv;
  }

  double number(const std::string& key, double fallback) const {
    auto it = values.find(key);
    if (it == values.end()) return fallback;
    std::istringstream ss(it->second);
    double v;
    if (!(ss >> v)) throw ParseError("bad number for key '" + key + "'", lines.at(key));
    return v;
  }
  int integer(const std::string& key, int fallback) const {
    const double v = number(key, fallback);
    if (v != std::floor(v))
      throw ParseError("expected integer for key '" + key + "'", lines.at(key));
    return static_cast<int>(v);
  }
};

}  // namespace detail

inline Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  auto kv = detail::KeyValueFile::parse(in);

  static const std::vector<std::string> known = {
      "frequency", "mode", "gauge.mu_star",
      "materials.source.mu", "materials.source.sigma",
      "materials.tube.mu", "materials.tube.sigma",
      "materials.deposit.mu", "materials.deposit.sigma",
      "materials.vacuum.mu", "materials.vacuum.sigma",
      "materials.plate.mu", "materials.plate.sigma",
      "coils.r_in", "coils.r_out", "coils.length", "coils.gap", "coils.current",
      "scan.zeta_min", "scan.zeta_max", "scan.step",
      "tube.r_in", "tube.r_out",
      "domain.radius", "domain.z_min", "domain.z_max",
      "grid.hbar", "grid.layers", "grid.sectors", "grid.max_shells",
      "grid.z_min", "grid.z_max",
      "mesh.sectors", "mesh.axial_step", "mesh.inner_rings", "mesh.gap_rings",
      "mesh.tube_rings", "mesh.outer_rings",
      "plate.enabled", "plate.r_in", "plate.r_out", "plate.z_min", "plate.z_max",
      "plate.openings", "plate.opening_width_deg"};
  for (const auto& [key, value] : kv.values)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParseError("unknown config key '" + key + "'", kv.lines.at(key));

  Config c = paper_defaults();
  c.omega = kv.number("frequency", c.omega);
  if (auto it = kv.values.find("mode"); it != kv.values.end()) {
    if (it->second == "FA") c.scan.mode = Mode::FA;
    else if (it->second == "F3") c.scan.mode = Mode::F3;
    else throw ParseError("mode must be FA or F3", kv.lines.at("mode"));
  }
  auto mat = [&](Region r, const char* name) {
    const std::string base = std::string("materials.") + name;
    c.materials.mu[static_cast<int>(r)] =
        kv.number(base + ".mu", c.materials.mu[static_cast<int>(r)]);
    c.materials.sigma[static_cast<int>(r)] =
        kv.number(base + ".sigma", c.materials.sigma[static_cast<int>(r)]);
  };
  mat(Region::Source, "source");
  mat(Region::Tube, "tube");
  mat(Region::Deposit, "deposit");
  mat(Region::Vacuum, "vacuum");
  mat(Region::Plate, "plate");
  c.materials.mu_star = kv.number("gauge.mu_star", c.materials.mu_star);
  c.coils.r_in = kv.number("coils.r_in", c.coils.r_in);
  c.coils.r_out = kv.number("coils.r_out", c.coils.r_out);
  c.coils.length = kv.number("coils.length", c.coils.length);
  c.coils.gap = kv.number("coils.gap", c.coils.gap);
  c.coils.current = kv.number("coils.current", c.coils.current);
  c.scan.zeta_min = kv.number("scan.zeta_min", c.scan.zeta_min);
  c.scan.zeta_max = kv.number("scan.zeta_max", c.scan.zeta_max);
  c.scan.step = kv.number("scan.step", c.scan.step);
  c.tube_r_in = kv.number("tube.r_in", c.tube_r_in);
  c.tube_r_out = kv.number("tube.r_out", c.tube_r_out);
  c.domain_radius = kv.number("domain.radius", c.domain_radius);
  c.domain_z_min = kv.number("domain.z_min", c.domain_z_min);
  c.domain_z_max = kv.number("domain.z_max", c.domain_z_max);
  c.grid.hbar = kv.number("grid.hbar", c.grid.hbar);
  c.grid.layers = kv.integer("grid.layers", c.grid.layers);
  c.grid.sectors = kv.integer("grid.sectors", c.grid.sectors);
  c.grid.max_shells = kv.integer("grid.max_shells", c.grid.max_shells);
  c.grid.z_min = kv.number("grid.z_min", c.domain_z_min);
  c.grid.z_max = kv.number("grid.z_max", c.domain_z_max);
  c.mesh.sectors = kv.integer("mesh.sectors", c.mesh.sectors);
  c.mesh.axial_step = kv.number("mesh.axial_step", c.mesh.axial_step);
  c.mesh.inner_rings = kv.integer("mesh.inner_rings", c.mesh.inner_rings);
  c.mesh.gap_rings = kv.integer("mesh.gap_rings", c.mesh.gap_rings);
  c.mesh.tube_rings = kv.integer("mesh.tube_rings", c.mesh.tube_rings);
  c.mesh.outer_rings = kv.integer("mesh.outer_rings", c.mesh.outer_rings);
  c.plate.enabled = kv.integer("plate.enabled", c.plate.enabled ? 1 : 0) != 0;
  c.plate.r_in = kv.number("plate.r_in", c.plate.r_in);
  c.plate.r_out = kv.number("plate.r_out", c.plate.r_out);
  c.plate.z_min = kv.number("plate.z_min", c.plate.z_min);
  c.plate.z_max = kv.number("plate.z_max", c.plate.z_max);
  c.plate.openings = kv.integer("plate.openings", c.plate.openings);
  c.plate.opening_width_deg =
      kv.number("plate.opening_width_deg", c.plate.opening_width_deg);

  c.materials.validate();
  if (c.grid.sectors >= 1 && c.mesh.sectors % c.grid.sectors != 0)
    throw InputError("mesh.sectors must be a multiple of grid.sectors");
  if (!(c.coils.r_out < c.tube_r_in))
    throw InputError("coil annulus must lie strictly inside the tube");
  return c;
}

// ---------------------------------------------------------------------------
// Source current density
// ---------------------------------------------------------------------------

/// Discrete coil source. The mesh models the coil annulus as a faceted prism,
/// so the azimuthal drive is carried along the sector chords: J is constant
/// per element, J = |J| t_s with t_s the unit chord direction of the sector.
/// That field is exactly divergence-free on the faceted coil (zero normal
/// flux through every chord facet, flux-continuous across the uniform sector
/// planes), which is what makes the weak-divergence contract machine-small.
struct SourceField {
  int coil = 0;
  double zeta = 0;
  double magnitude = 1.0;  // |J|
  double volume = 0;       // faceted coil volume
  std::vector<int> elements;
  std::vector<Vec3> direction;  // unit chord direction per element
};

inline SourceField build_source(const LabeledTetMesh& mesh, const CoilConfig& coils,
                                int energized_coil, double zeta) {
  const auto [z0, z1] = coils.z_range(energized_coil, zeta);
  SourceField src;
  src.coil = energized_coil;
  src.zeta = zeta;
  src.magnitude = coils.current;
  const double two_pi = 2.0 * std::numbers::pi;

  // polygon vertex angles from the nodes sitting exactly on the coil inner
  // radius within the coil axial window
  std::vector<double> angles;
  for (const auto& p : mesh.vertices) {
    if (p.z() < z0 - 1e-9 || p.z() > z1 + 1e-9) continue;
    if (std::abs(std::hypot(p.x(), p.y()) - coils.r_in) < 1e-9) {
      double a = std::atan2(p.y(), p.x());
      if (a < 0) a += two_pi;
      angles.push_back(a);
    }
  }
  std::sort(angles.begin(), angles.end());
  angles.erase(std::unique(angles.begin(), angles.end(),
                           [](double a, double b) { return std::abs(a - b) < 1e-9; }),
               angles.end());
  const int S = static_cast<int>(angles.size());
  if (S < 3)
    throw SourceConformityError("coil support is not resolved by the mesh at zeta=" +
                                std::to_string(zeta));
  const double width = two_pi / S;
  for (int s = 0; s + 1 < S; ++s)
    if (std::abs(angles[s + 1] - angles[s] - width) > 1e-9)
      throw SourceConformityError("coil sectors are not uniform");
  const double cos_half = std::cos(0.5 * width);

  auto sector_of = [&](const Vec3& c) {
    double phi = std::atan2(c.y(), c.x()) - angles[0];
    phi -= std::floor(phi / two_pi) * two_pi;
    return std::clamp(static_cast<int>(phi / width), 0, S - 1);
  };

  for (int t = 0; t < mesh.tet_count(); ++t) {
    if (mesh.labels[t] != Region::Source) continue;
    const Vec3 c = mesh.tet_centroid(t);
    if (c.z() <= z0 || c.z() >= z1) continue;
    const int s = sector_of(c);
    const double mid = angles[0] + (s + 0.5) * width;
    const Vec3 er(std::cos(mid), std::sin(mid), 0.0);
    const double proj = c.x() * er.x() + c.y() * er.y();
    if (proj <= coils.r_in * cos_half || proj >= coils.r_out * cos_half) continue;
    src.elements.push_back(t);
    src.direction.emplace_back(-std::sin(mid), std::cos(mid), 0.0);
    src.volume += mesh.tet_volume(t);
  }

  // conformity: the selected elements must tile the faceted annulus exactly
  const double expect = 0.5 * S * std::sin(width) *
                        (coils.r_out * coils.r_out - coils.r_in * coils.r_in) *
                        (z1 - z0);
  if (src.elements.empty() || std::abs(src.volume - expect) > 1e-9 * expect)
    throw SourceConformityError(
        "coil support crosses element boundaries non-conformally at zeta=" +
        std::to_string(zeta));
  return src;
}

/// max over P1 scalar test functions of |int J . grad(phi) dx|, normalized by
/// |J| times the coil volume. Machine-small for a conforming coil.
inline double weak_divergence_residual(const LabeledTetMesh& mesh,
                                       const SourceField& src) {
  std::vector<double> acc(mesh.node_count(), 0.0);
  for (std::size_t e = 0; e < src.elements.size(); ++e) {
    const int t = src.elements[e];
    const auto v = mesh.tet_vertices(t);
    Eigen::Matrix3d E;
    E.col(0) = v[1] - v[0];
    E.col(1) = v[2] - v[0];
    E.col(2) = v[3] - v[0];
    const Eigen::Matrix3d Einv = E.inverse();
    std::array<Vec3, 4> grad;
    grad[1] = Einv.row(0);
    grad[2] = Einv.row(1);
    grad[3] = Einv.row(2);
    grad[0] = -(grad[1] + grad[2] + grad[3]);
    const Vec3 JK = src.magnitude * src.direction[e];
    const double vol = mesh.tet_volume(t);
    for (int a = 0; a < 4; ++a)
      acc[mesh.tets[t][a]] += vol * grad[a].dot(JK);
  }
  double worst = 0.0;
  for (double a : acc) worst = std::max(worst, std::abs(a));
  return worst / (src.magnitude * src.volume);
}

}  // namespace eddy
