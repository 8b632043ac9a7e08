#pragma once

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <tuple>

#include "eddy/adjoint.hpp"
#include "eddy/forward.hpp"
#include "eddy/gradient.hpp"
#include "eddy/inversion.hpp"
#include "eddy/physics.hpp"

namespace eddy {

/// Deposit-free half of the problem. Its coefficients do not depend on the
/// deposit labeling, so one instance is shared across every realization of
/// the same invariant mesh: one factorization and one field cache serve the
/// whole inversion.
struct FreeParts {
  AssembledSystem sys;
  std::unique_ptr<Factorization> F;
  std::map<std::pair<int, long long>, FieldSolution> fields;
  std::uint64_t geom_hash = 0;
};

namespace detail {
inline long long zeta_key(double zeta) { return std::llround(zeta * 1e6); }
}  // namespace detail

/// Forward machinery for one deposit realization: with-deposit and
/// deposit-free systems factored once each, per-(coil, position) solution
/// and adjoint caches, impedance channels and the interface gradient.
class ForwardEngine {
public:
  ForwardEngine(LabeledTetMesh mesh, Config cfg,
                std::shared_ptr<FreeParts> shared_free = nullptr)
      : mesh_(std::move(mesh)), cfg_(std::move(cfg)) {
    sys_dep_ = assemble_system(mesh_, cfg_.materials, cfg_.omega, true);
    if (shared_free) {
      if (shared_free->geom_hash != geometry_hash(mesh_))
        throw ContractError("shared deposit-free parts built on another geometry");
      free_ = std::move(shared_free);
    } else {
      free_ = std::make_shared<FreeParts>();
      free_->sys = assemble_system(mesh_, cfg_.materials, cfg_.omega, false);
      free_->geom_hash = geometry_hash(mesh_);
    }
  }

  const LabeledTetMesh& mesh() const { return mesh_; }
  const Config& config() const { return cfg_; }
  std::shared_ptr<FreeParts> free_parts() { return free_; }

  const AssembledSystem& system(bool with_deposit) const {
    return with_deposit ? sys_dep_ : free_->sys;
  }

  const Factorization& factorization(bool with_deposit) {
    if (with_deposit) {
      if (!F_dep_) F_dep_ = std::make_unique<Factorization>(
                       Factorization::factor(sys_dep_.S));
      return *F_dep_;
    }
    if (!free_->F)
      free_->F = std::make_unique<Factorization>(Factorization::factor(free_->sys.S));
    return *free_->F;
  }

  const FieldSolution& fields(int coil, double zeta, bool with_deposit) {
    auto& cache = with_deposit ? dep_fields_ : free_->fields;
    const auto key = std::make_pair(coil, detail::zeta_key(zeta));
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, solve_fields(mesh_, system(with_deposit),
                                           factorization(with_deposit), cfg_.coils,
                                           coil, zeta))
               .first;
    return it->second;
  }

  const AdjointSolution& adjoint(int coil_l, double zeta) {
    const auto key = std::make_pair(coil_l, detail::zeta_key(zeta));
    auto it = adjoints_.find(key);
    if (it == adjoints_.end()) {
      const Eigen::VectorXcd rhs = assemble_adjoint_rhs(
          sys_dep_, mesh_, cfg_.materials, fields(coil_l, zeta, false));
      it = adjoints_
               .emplace(key, solve_adjoint(mesh_, sys_dep_, factorization(true), rhs,
                                           coil_l, zeta))
               .first;
    }
    return it->second;
  }

  Complex delta_z(int k, int l, double zeta) {
    return impedance(mesh_, cfg_.materials, cfg_.coils.current,
                     fields(k, zeta, true), fields(l, zeta, false));
  }

  ImpedanceSignal run_scan() {
    ImpedanceSignal sig;
    sig.mode = cfg_.scan.mode;
    sig.zeta = cfg_.scan.positions();
    sig.mesh_hash = mesh_.hash();
    sig.deposit_hash = mesh_.labels.empty()
                           ? 0
                           : fnv1a(mesh_.labels.data(), mesh_.labels.size());
    for (double z : sig.zeta) {
      const Complex z11 = delta_z(1, 1, z);
      const Complex z21 = delta_z(2, 1, z);
      const Complex z22 = delta_z(2, 2, z);
      sig.z11.push_back(z11);
      sig.z21.push_back(z21);
      sig.z22.push_back(z22);
      sig.fa.push_back(ImpedanceSignal::fa_of(z11, z21));
      sig.f3.push_back(ImpedanceSignal::f3_of(z11, z22));
    }
    return sig;
  }

  /// Interface gradient density for the configured mode against a target
  /// signal, plus its projection onto the parameter grid.
  ShapeGradient gradient(const InterfaceGamma& gamma, const FixedGrid& grid,
                         const ImpedanceSignal& own, const ImpedanceSignal& target,
                         AdjointTraceSide side = AdjointTraceSide::Vacuum) {
    if (own.zeta != target.zeta)
      throw ContractError("signal and target probe positions differ");
    const Mode mode = cfg_.scan.mode;
    ShapeGradient sg;
    sg.mode = mode;
    sg.layers = grid.layers;
    sg.sectors = grid.sectors;
    sg.positions = own.zeta;
    sg.g.assign(gamma.tris.size(), 0.0);
    const auto w = zeta_weights(own.zeta);
    // coil pairs entering the density for each mode, with their signs
    const std::vector<std::pair<std::array<int, 2>, double>> pairs =
        mode == Mode::FA
            ? std::vector<std::pair<std::array<int, 2>, double>>{{{1, 1}, 1.0},
                                                                 {{2, 1}, 1.0}}
            : std::vector<std::pair<std::array<int, 2>, double>>{{{1, 1}, 1.0},
                                                                 {{2, 2}, -1.0}};
    for (std::size_t q = 0; q < own.zeta.size(); ++q) {
      const Complex residual = own.channel(mode)[q] - target.channel(mode)[q];
      for (const auto& [kl, sign] : pairs) {
        const auto traces =
            extract_traces(mesh_, gamma, fields(kl[0], own.zeta[q], true),
                           fields(kl[1], own.zeta[q], false),
                           adjoint(kl[1], own.zeta[q]));
        accumulate_gradient_density(sg.g, w[q], residual, traces, sign,
                                    cfg_.materials, cfg_.omega, side);
      }
    }
    sg.dfdL = parameter_gradient(sg.g, gamma, grid, cfg_.omega, cfg_.coils.current);
    return sg;
  }

private:
  LabeledTetMesh mesh_;
  Config cfg_;
  AssembledSystem sys_dep_;
  std::unique_ptr<Factorization> F_dep_;
  std::shared_ptr<FreeParts> free_;
  std::map<std::pair<int, long long>, FieldSolution> dep_fields_;
  std::map<std::pair<int, long long>, AdjointSolution> adjoints_;
};

/// Complex Gaussian multiplicative noise of relative amplitude `noise` on the
/// stored dZ channels; the derived channels are rebuilt so they stay exactly
/// recomputable.
inline void add_signal_noise(ImpedanceSignal& sig, double noise,
                             std::uint64_t seed) {
  if (noise <= 0) return;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto perturb = [&](Complex& z) {
    const Complex eta(gauss(rng), gauss(rng));
    z *= 1.0 + noise * eta / std::sqrt(2.0);
  };
  for (std::size_t q = 0; q < sig.size(); ++q) {
    perturb(sig.z11[q]);
    perturb(sig.z21[q]);
    perturb(sig.z22[q]);
    sig.fa[q] = ImpedanceSignal::fa_of(sig.z11[q], sig.z21[q]);
    sig.f3[q] = ImpedanceSignal::f3_of(sig.z11[q], sig.z22[q]);
  }
}

/// Binds the scan machinery to the descent's objective interface: misfit and
/// parameter gradient as functions of the thickness table, with a persistent
/// per-realization cache and the deposit-free parts shared across all of it.
class InversionDriver {
public:
  InversionDriver(LabeledTetMesh base_mesh, FixedGrid grid, Config cfg,
                  ImpedanceSignal target)
      : base_(std::move(base_mesh)), grid_(std::move(grid)), cfg_(std::move(cfg)),
        target_(std::move(target)) {
    const auto positions = cfg_.scan.positions();
    if (target_.zeta.size() != positions.size())
      throw InputError("target positions do not match the configured scan");
    for (std::size_t i = 0; i < positions.size(); ++i)
      if (std::abs(target_.zeta[i] - positions[i]) > 1e-9)
        throw InputError("target positions do not match the configured scan");
  }

  const FixedGrid& grid() const { return grid_; }
  const Config& config() const { return cfg_; }
  const ImpedanceSignal& target() const { return target_; }
  int scan_evaluations() const { return scans_; }

  double misfit(const DepositParam& L) { return entry(L).f; }

  const ImpedanceSignal& signal_for(const DepositParam& L) { return entry(L).sig; }

  std::vector<double> gradient_table(const DepositParam& L,
                                     AdjointTraceSide side = AdjointTraceSide::Vacuum) {
    auto& engine = engine_for(L);
    const auto gamma = current_gamma_;
    return engine.gradient(*gamma, grid_, entry(L).sig, target_, side).dfdL;
  }

  Objective objective(AdjointTraceSide side = AdjointTraceSide::Vacuum) {
    return Objective{
        [this](const DepositParam& L) { return misfit(L); },
        [this, side](const DepositParam& L) { return gradient_table(L, side); }};
  }

  ForwardEngine& engine_for(const DepositParam& L) {
    const auto key = L.shell_counts();
    if (!current_engine_ || current_key_ != key) {
      LabeledTetMesh realized = realize_deposit(base_, grid_, L);
      current_gamma_ = std::make_shared<InterfaceGamma>(extract_interface(realized));
      bind_to_grid(*current_gamma_, grid_);
      current_engine_ =
          std::make_unique<ForwardEngine>(std::move(realized), cfg_, free_);
      if (!free_) free_ = current_engine_->free_parts();
      current_key_ = key;
    }
    return *current_engine_;
  }

private:
  struct Entry {
    double f = 0;
    ImpedanceSignal sig;
  };

  const Entry& entry(const DepositParam& L) {
    const auto key = L.shell_counts();
    auto it = cache_.find(key);
    if (it == cache_.end()) {
      auto& engine = engine_for(L);
      Entry e;
      e.sig = engine.run_scan();
      e.sig.deposit_hash = L.hash();
      e.f = misfit_value(e.sig.zeta, e.sig.channel(cfg_.scan.mode),
                         target_.channel(cfg_.scan.mode));
      ++scans_;
      it = cache_.emplace(key, std::move(e)).first;
    }
    return it->second;
  }

  LabeledTetMesh base_;
  FixedGrid grid_;
  Config cfg_;
  ImpedanceSignal target_;
  std::shared_ptr<FreeParts> free_;
  std::map<std::vector<int>, Entry> cache_;
  std::unique_ptr<ForwardEngine> current_engine_;
  std::shared_ptr<InterfaceGamma> current_gamma_;
  std::vector<int> current_key_;
  int scans_ = 0;
};

}  // namespace eddy
