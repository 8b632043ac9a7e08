// Command-line driver: synthetic eddy-current probe scans of tube deposits
// and their inversion on the fixed reconstruction grid.
//
// Exit codes: 0 success/converged, 2 singular point, 3 input error,
// 4 numerical failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "eddy/engine.hpp"
#include "eddy/io.hpp"

namespace fs = std::filesystem;
using namespace eddy;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string mesh_path;  // empty: generate
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  bool emit_plots = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file")->required();
  cmd->add_option("--mesh", args.mesh_path, "mesh file (default: generate)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "noise seed");
  cmd->add_flag("--emit-plots", args.emit_plots, "write gnuplot scripts");
}

struct Problem {
  Config cfg;
  LabeledTetMesh mesh;
  FixedGrid grid;
};

Problem setup(const CommonArgs& args) {
  Problem p;
  p.cfg = load_config(args.config_path);
  if (args.mesh_path.empty())
    p.mesh = generate_tube_mesh(p.cfg.mesh_spec());
  else
    p.mesh = load_mesh(args.mesh_path);
  p.grid = p.cfg.make_grid(p.mesh);
  return p;
}

RunManifest make_manifest(const std::string& command, const CommonArgs& args,
                          const std::vector<std::pair<std::string, std::string>>& extra_inputs) {
  RunManifest m;
  m.command = command;
  m.config_path = args.config_path;
  m.mesh_source = args.mesh_path.empty() ? "generated" : args.mesh_path;
  m.out_dir = args.out_dir;
  m.seed = args.seed;
  m.input_hashes["config"] = hex64(hash_file(args.config_path));
  if (!args.mesh_path.empty())
    m.input_hashes["mesh"] = hex64(hash_file(args.mesh_path));
  for (const auto& [name, path] : extra_inputs)
    m.input_hashes[name] = hex64(hash_file(path));
  return m;
}

DepositParam default_band_deposit(const FixedGrid& grid) {
  DepositParam L = DepositParam::zeros(grid);
  const int mid = grid.layers / 2;
  for (int n = std::max(0, mid - 1); n <= std::min(grid.layers - 1, mid); ++n)
    for (int s = 0; s < grid.sectors; ++s) L.at(n, s) = grid.hbar;
  return L;
}

int run_mesh_gen(const CommonArgs& args) {
  const Problem p = setup(args);
  fs::create_directories(args.out_dir);
  const auto manifest = make_manifest("mesh-gen", args, {});
  manifest.write(args.out_dir + "/manifest.json");
  save_mesh(p.mesh, args.out_dir + "/mesh.eddymesh");
  for (int r = 0; r < kRegionCount; ++r) {
    const Region region = static_cast<Region>(r);
    std::printf("volume %s %.17g\n", region_name(region),
                p.mesh.region_volume(region));
  }
  std::printf("nodes %d tets %d\n", p.mesh.node_count(), p.mesh.tet_count());
  return 0;
}

int run_scan_cmd(const CommonArgs& args, const std::string& deposit_path,
                 const std::string& matrix_dump) {
  const Problem p = setup(args);
  const DepositParam L = deposit_path.empty() ? DepositParam::zeros(p.grid)
                                              : read_deposit(deposit_path);
  const LabeledTetMesh realized = realize_deposit(p.mesh, p.grid, L);
  ForwardEngine engine(realized, p.cfg);
  if (!matrix_dump.empty()) {
    std::ofstream out(matrix_dump);
    write_matrix_dump(engine.system(true), out);
  }
  ImpedanceSignal sig = engine.run_scan();
  fs::create_directories(args.out_dir);
  std::vector<std::pair<std::string, std::string>> extra;
  if (!deposit_path.empty()) extra.emplace_back("deposit", deposit_path);
  const auto manifest = make_manifest("scan", args, extra);
  manifest.write(args.out_dir + "/manifest.json");
  const std::string csv = args.out_dir + "/signal.csv";
  write_signal_csv(sig, csv, manifest.hash());
  if (args.emit_plots) emit_signal_plot({csv}, args.out_dir);
  return 0;
}

int run_synth(const CommonArgs& args, const std::string& deposit_path,
              double noise) {
  const Problem p = setup(args);
  const DepositParam L = read_deposit(deposit_path);
  const LabeledTetMesh realized = realize_deposit(p.mesh, p.grid, L);
  ForwardEngine engine(realized, p.cfg);
  ImpedanceSignal sig = engine.run_scan();
  add_signal_noise(sig, noise, args.seed);
  fs::create_directories(args.out_dir);
  const auto manifest =
      make_manifest("synth", args, {{"deposit", deposit_path}});
  manifest.write(args.out_dir + "/manifest.json");
  const std::string csv = args.out_dir + "/target.csv";
  write_signal_csv(sig, csv, manifest.hash());
  if (args.emit_plots) emit_signal_plot({csv}, args.out_dir);
  return 0;
}

int run_invert(const CommonArgs& args, const std::string& target_path,
               double delta, double eps_override) {
  const Problem p = setup(args);
  const ImpedanceSignal target = read_signal_csv(target_path);
  InversionDriver driver(p.mesh, p.grid, p.cfg, target);

  // start from the lowest grid layer everywhere (cells that have candidates)
  DepositParam L0 = DepositParam::uniform(p.grid, p.grid.hbar);
  for (int n = 0; n < p.grid.layers; ++n)
    for (int s = 0; s < p.grid.sectors; ++s) {
      bool any = false;
      for (const auto& shell : p.grid.cells[p.grid.cell_index(n, s)])
        if (!shell.empty()) any = true;
      if (!any) L0.at(n, s) = 0;
    }

  const double f0 = driver.misfit(L0);
  const double eps = eps_override > 0 ? eps_override : 1e-8 * f0;
  const DescentResult res = descend(L0, driver.objective(), eps, delta);

  fs::create_directories(args.out_dir);
  const auto manifest = make_manifest("invert", args, {{"target", target_path}});
  manifest.write(args.out_dir + "/manifest.json");
  write_deposit(res.L, args.out_dir + "/L_final.deposit");
  write_history_csv(res, args.out_dir + "/history.csv");
  {
    std::ofstream log(args.out_dir + "/runlog.txt");
    write_run_log(res, log);
  }
  std::vector<std::string> iter_csv;
  for (std::size_t i = 0; i < res.accepted_path.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "/iter_%03zu.csv", i);
    const std::string csv = args.out_dir + name;
    write_signal_csv(driver.signal_for(res.accepted_path[i]), csv, manifest.hash());
    iter_csv.push_back(csv);
  }
  if (args.emit_plots) {
    emit_signal_plot(iter_csv, args.out_dir);
    emit_history_plot(args.out_dir + "/history.csv", args.out_dir);
  }
  std::printf("status %s iterations %d f %.17g (f0 %.17g, scans %d)\n",
              res.status == DescentStatus::Converged ? "converged" : "singular_point",
              res.iterations, res.f, f0, driver.scan_evaluations());
  return res.status == DescentStatus::Converged ? 0 : 2;
}

int run_gradcheck(const CommonArgs& args, const std::string& deposit_path,
                  const std::string& side_name, const std::string& dump_g) {
  const Problem p = setup(args);
  const DepositParam L = deposit_path.empty() ? default_band_deposit(p.grid)
                                              : read_deposit(deposit_path);
  const AdjointTraceSide side = side_name == "deposit" ? AdjointTraceSide::Deposit
                                                       : AdjointTraceSide::Vacuum;
  const LabeledTetMesh realized = realize_deposit(p.mesh, p.grid, L);
  InterfaceGamma gamma = extract_interface(realized);
  bind_to_grid(gamma, p.grid);
  if (gamma.tris.empty()) throw InputError("grad-check needs a nonempty deposit");

  ForwardEngine engine(realized, p.cfg);
  const auto& mat = p.cfg.materials;
  const double omega = p.cfg.omega;
  const double jmag = p.cfg.coils.current;
  const auto positions = p.cfg.scan.positions();
  const double zeta = positions[positions.size() / 2];

  // smooth radial perturbation supported around the deposit shells
  double zlo = 1e30, zhi = -1e30;
  for (const auto& tri : gamma.tris) {
    zlo = std::min(zlo, tri.centroid.z());
    zhi = std::max(zhi, tri.centroid.z());
  }
  const double slab = p.grid.slab_height();
  RadialBump theta{p.cfg.tube_r_out,
                   p.cfg.tube_r_out + (p.grid.max_shells + 1.5) * p.grid.hbar,
                   zlo - 1.5 * slab, zhi + 1.5 * slab,
                   p.grid.hbar, slab};
  std::vector<double> theta_n(gamma.tris.size());
  for (std::size_t i = 0; i < gamma.tris.size(); ++i)
    theta_n[i] = theta(gamma.tris[i].centroid).dot(gamma.tris[i].normal);

  const double t = 1e-3 * p.grid.hbar;
  const LabeledTetMesh deformed =
      deform_mesh(realized, [&](const Vec3& x) { return theta(x); }, t);
  ForwardEngine engine_def(deformed, p.cfg);

  bool all_pass = true;
  auto report = [&](bool pass, const std::string& text) {
    std::printf("[%s] %s\n", pass ? "PASS" : "FAIL", text.c_str());
    if (!pass) all_pass = false;
  };

  const std::vector<std::array<int, 2>> pairs = {{1, 1}, {2, 1}, {2, 2}};
  double err_vac = 0, err_dep = 0;
  for (const auto& kl : pairs) {
    const auto samples =
        extract_traces(realized, gamma, engine.fields(kl[0], zeta, true),
                       engine.fields(kl[1], zeta, false), engine.adjoint(kl[1], zeta));
    const Complex quotient =
        (engine_def.delta_z(kl[0], kl[1], zeta) - engine.delta_z(kl[0], kl[1], zeta)) / t;
    const Complex adj_vac = impedance_shape_derivative(samples, theta_n, mat, omega,
                                                       jmag, AdjointTraceSide::Vacuum);
    const Complex adj_dep = impedance_shape_derivative(samples, theta_n, mat, omega,
                                                       jmag, AdjointTraceSide::Deposit);
    const double scale = std::max(std::abs(quotient), 1e-300);
    const double ev = std::abs(adj_vac - quotient) / scale;
    const double ed = std::abs(adj_dep - quotient) / scale;
    err_vac = std::max(err_vac, ev);
    err_dep = std::max(err_dep, ed);
    const double err = side == AdjointTraceSide::Vacuum ? ev : ed;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "dZ'(%d,%d) adjoint vs difference quotient: rel err %.3g <= 0.1",
                  kl[0], kl[1], err);
    report(err <= 0.1, buf);
  }
  std::printf("[INFO] worst rel err by trace side: vacuum %.3g, deposit %.3g -> oracle favors %s\n",
              err_vac, err_dep, err_vac <= err_dep ? "vacuum" : "deposit");

  // zero contrast: all jumps vanish, the derivative must be exactly zero
  {
    MaterialTable flat = mat;
    flat.mu[static_cast<int>(Region::Deposit)] =
        flat.mu[static_cast<int>(Region::Vacuum)];
    flat.sigma[static_cast<int>(Region::Deposit)] = 0.0;
    const auto samples =
        extract_traces(realized, gamma, engine.fields(1, zeta, true),
                       engine.fields(1, zeta, false), engine.adjoint(1, zeta));
    const Complex dz =
        impedance_shape_derivative(samples, theta_n, flat, omega, jmag, side);
    report(dz == Complex(0.0, 0.0), "zero-contrast shape derivative is exactly 0");
  }

  // misfit gradient: descent sign and quotient agreement along theta
  {
    DepositParam Lstar = L;
    const int mid = p.grid.layers / 2;
    for (int s = 0; s < p.grid.sectors; ++s)
      Lstar.at(mid, s) = std::min(p.grid.Lmax(), Lstar.at(mid, s) + p.grid.hbar);
    const LabeledTetMesh target_mesh = realize_deposit(p.mesh, p.grid, Lstar);
    ForwardEngine target_engine(target_mesh, p.cfg, engine.free_parts());
    const ImpedanceSignal target = target_engine.run_scan();

    const ImpedanceSignal own = engine.run_scan();
    const ShapeGradient sg = engine.gradient(gamma, p.grid, own, target, side);
    const double pred_descent = predicted_descent_value(sg.g, gamma, omega, jmag);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "descent value f'(g n) = %.6g <= 1e-15",
                  pred_descent);
    report(pred_descent <= 1e-15, buf);

    double fprime_theta = 0;
    for (std::size_t i = 0; i < gamma.tris.size(); ++i)
      fprime_theta += theta_n[i] * sg.g[i] * gamma.tris[i].area;
    fprime_theta *= -(omega / (jmag * jmag));

    const ImpedanceSignal own_def = engine_def.run_scan();
    const Mode mode = p.cfg.scan.mode;
    const double f0 = misfit_value(own.zeta, own.channel(mode), target.channel(mode));
    const double f1 =
        misfit_value(own_def.zeta, own_def.channel(mode), target.channel(mode));
    const double quotient = (f1 - f0) / t;
    const bool sign_ok = quotient == 0 || std::signbit(quotient) == std::signbit(fprime_theta);
    const double rel = std::abs(fprime_theta - quotient) /
                       std::max(std::abs(quotient), 1e-300);
    std::snprintf(buf, sizeof(buf),
                  "misfit derivative vs quotient: sign %s, rel err %.3g <= 0.15",
                  sign_ok ? "match" : "MISMATCH", rel);
    report(sign_ok && rel <= 0.15, buf);

    if (!dump_g.empty()) write_density_csv(sg, gamma, dump_g);
  }
  return all_pass ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"eddy-current deposit scan and reconstruction"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string deposit_path, target_path, matrix_dump, dump_g;
  std::string side_name = "vacuum";
  double noise = 0.0, delta = 0.6, eps_override = -1.0;

  auto* mesh_gen = app.add_subcommand("mesh-gen", "generate the tube mesh");
  add_common(mesh_gen, args);

  auto* synth = app.add_subcommand("synth", "synthesize a target signal");
  add_common(synth, args);
  synth->add_option("--deposit", deposit_path, "true deposit table")->required();
  synth->add_option("--noise", noise, "relative complex Gaussian noise amplitude");

  auto* scan = app.add_subcommand("scan", "run a probe scan");
  add_common(scan, args);
  scan->add_option("--deposit", deposit_path, "deposit table (default: none)");
  scan->add_option("--dump-matrix", matrix_dump, "write the system in 'row col re im' form");

  auto* invert = app.add_subcommand("invert", "reconstruct the deposit from a target");
  add_common(invert, args);
  invert->add_option("--target", target_path, "target signal CSV")->required();
  invert->add_option("--delta", delta, "step halving factor in (1/2, 1)");
  invert->add_option("--eps", eps_override, "gradient-norm stop (default 1e-8 f0)");

  auto* gradcheck = app.add_subcommand("grad-check", "verify the shape gradient");
  add_common(gradcheck, args);
  gradcheck->add_option("--deposit", deposit_path, "deposit table (default: mid band)");
  gradcheck->add_option("--adjoint-side", side_name, "vacuum|deposit trace side")
      ->check(CLI::IsMember({"vacuum", "deposit"}));
  gradcheck->add_option("--dump-g", dump_g, "write per-facet density CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mesh_gen->parsed()) return run_mesh_gen(args);
    if (synth->parsed()) return run_synth(args, deposit_path, noise);
    if (scan->parsed()) return run_scan_cmd(args, deposit_path, matrix_dump);
    if (invert->parsed()) return run_invert(args, target_path, delta, eps_override);
    if (gradcheck->parsed()) return run_gradcheck(args, deposit_path, side_name, dump_g);
  } catch (const SingularSystemError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
