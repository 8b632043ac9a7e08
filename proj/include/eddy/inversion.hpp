#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "eddy/mesh.hpp"
#include "eddy/types.hpp"

namespace eddy {

/// Rounds every entry to the nearest grid multiple (exact half-steps round
/// up) and clamps into [0, Lmax]. Idempotent.
inline DepositParam project_to_grid(DepositParam raw) {
  for (double& v : raw.L) {
    const double n = std::floor(v / raw.hbar + 0.5);
    v = std::clamp(n, 0.0, std::floor(raw.Lmax / raw.hbar + 0.5)) * raw.hbar;
  }
  return raw;
}

/// Inner-trial budget P = floor(log(0.4 hbar) / log(delta)), at least 1.
inline int halving_limit(double hbar, double delta) {
  if (!(delta > 0.5 && delta < 1.0)) throw ContractError("delta must lie in (1/2, 1)");
  const int p = static_cast<int>(std::floor(std::log(0.4 * hbar) / std::log(delta)));
  return std::max(1, p);
}

struct Objective {
  std::function<double(const DepositParam&)> value;
  std::function<std::vector<double>(const DepositParam&)> gradient;
};

enum class DescentStatus { Converged, SingularPoint };

struct TrialRecord {
  int k = 0, p = 0;
  double t = 0, f = 0;
  bool accepted = false;
};

struct HistoryRow {
  int k = 0;
  double f = 0, gradnorm = 0;
};

struct DescentResult {
  DepositParam L;
  double f = 0;
  DescentStatus status = DescentStatus::Converged;
  int iterations = 0;
  std::vector<HistoryRow> history;          // accepted iterates, k = 0 first
  std::vector<TrialRecord> trials;          // every inner trial
  std::vector<DepositParam> accepted_path;  // L^0, L^1, ...
};

/// Adaptive-step projected gradient descent on the fixed grid. Each outer
/// iteration scales the step so the largest cell moves one grid quantum
/// before projection, then halves by delta until the misfit decreases; P
/// rejected trials in a row end the run at a singular point. A trial whose
/// projection does not move any cell counts as rejected.
inline DescentResult descend(const DepositParam& L0, const Objective& obj,
                             double eps, double delta) {
  const int P = halving_limit(L0.hbar, delta);
  DescentResult res;
  res.L = project_to_grid(L0);
  res.f = obj.value(res.L);
  std::vector<double> grad = obj.gradient(res.L);
  res.accepted_path.push_back(res.L);

  auto norm2 = [](const std::vector<double>& g) {
    double s = 0;
    for (double v : g) s += v * v;
    return std::sqrt(s);
  };
  res.history.push_back({0, res.f, norm2(grad)});

  int k = 0;
  while (norm2(grad) > eps) {
    double gmax = 0;
    for (double v : grad) gmax = std::max(gmax, std::abs(v));
    double t = L0.hbar / gmax;
    bool accepted = false;
    const auto current_shells = res.L.shell_counts();
    for (int p = 1; p <= P; ++p) {
      t *= delta;
      DepositParam trial = res.L;
      for (std::size_t i = 0; i < trial.L.size(); ++i) trial.L[i] -= t * grad[i];
      trial = project_to_grid(trial);
      if (trial.shell_counts() == current_shells) {
        res.trials.push_back({k, p, t, res.f, false});
        continue;
      }
      const double f_trial = obj.value(trial);
      const bool ok = f_trial < res.f;
      res.trials.push_back({k, p, t, f_trial, ok});
      if (ok) {
        res.L = trial;
        res.f = f_trial;
        grad = obj.gradient(res.L);
        ++k;
        res.history.push_back({k, res.f, norm2(grad)});
        res.accepted_path.push_back(res.L);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.status = DescentStatus::SingularPoint;
      res.iterations = k;
      return res;
    }
  }
  res.status = DescentStatus::Converged;
  res.iterations = k;
  return res;
}

}  // namespace eddy
