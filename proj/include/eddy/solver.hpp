#pragma once

#include <chrono>
#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Sparse>
#include <umfpack.h>

#include "eddy/types.hpp"

namespace eddy {

struct SolveStats {
  int n = 0;
  long long factor_nonzeros = 0;
  double factor_seconds = 0;
  double solve_seconds = 0;
  int factor_count = 0;
  int solve_count = 0;
  double rcond = 0;
};

/// One-shot LU of a complex sparse system (UMFPACK, packed complex storage).
/// The factored form is reused across every right-hand side; solves are
/// residual-checked against the retained matrix copy.
class Factorization {
public:
  Factorization(const Factorization&) = delete;
  Factorization& operator=(const Factorization&) = delete;
  Factorization(Factorization&& o) noexcept { swap(o); }
  Factorization& operator=(Factorization&& o) noexcept {
    swap(o);
    return *this;
  }
  ~Factorization() {
    if (numeric_) umfpack_zi_free_numeric(&numeric_);
  }

  static Factorization factor(Eigen::SparseMatrix<Complex> S) {
    if (S.rows() != S.cols()) throw ContractError("matrix must be square");
    Factorization f;
    S.makeCompressed();
    f.S_ = std::move(S);
    const int n = static_cast<int>(f.S_.rows());
    f.stats_.n = n;
    umfpack_zi_defaults(f.control_);

    const auto t0 = std::chrono::steady_clock::now();
    void* symbolic = nullptr;
    double info[UMFPACK_INFO];
    int status = umfpack_zi_symbolic(n, n, f.S_.outerIndexPtr(), f.S_.innerIndexPtr(),
                                     values(f.S_), nullptr, &symbolic, f.control_, info);
    if (status != UMFPACK_OK) {
      if (symbolic) umfpack_zi_free_symbolic(&symbolic);
      if (status == UMFPACK_ERROR_invalid_matrix)
        throw ContractError("invalid sparse matrix structure");
      throw SingularSystemError("structurally singular system", -1);
    }
    status = umfpack_zi_numeric(f.S_.outerIndexPtr(), f.S_.innerIndexPtr(),
                                values(f.S_), nullptr, symbolic, &f.numeric_,
                                f.control_, info);
    umfpack_zi_free_symbolic(&symbolic);
    f.stats_.rcond = info[UMFPACK_RCOND];
    const bool singular = status == UMFPACK_WARNING_singular_matrix ||
                          (status == UMFPACK_OK && f.stats_.rcond < 1e-13);
    if (status != UMFPACK_OK && !singular)
      throw NumericalError("numeric factorization failed (status " +
                           std::to_string(status) + ")");
    if (singular) throw SingularSystemError("singular system", f.worst_pivot(n));
    f.stats_.factor_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    f.stats_.factor_count = 1;
    f.stats_.factor_nonzeros = factored_nonzeros(f.numeric_);
    return f;
  }

  Eigen::VectorXcd solve(const Eigen::VectorXcd& b) const {
    if (b.size() != S_.rows()) throw ContractError("right-hand side dimension mismatch");
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::VectorXcd x(b.size());
    double info[UMFPACK_INFO];
    const int status = umfpack_zi_solve(
        UMFPACK_A, S_.outerIndexPtr(), S_.innerIndexPtr(), values(S_), nullptr,
        reinterpret_cast<double*>(x.data()), nullptr,
        reinterpret_cast<const double*>(b.data()), nullptr, numeric_, control_, info);
    if (status != UMFPACK_OK) throw NumericalError("sparse solve failed");
    const double bnorm = b.norm();
    if (bnorm > 0) {
      const double rel = (S_ * x - b).norm() / bnorm;
      if (!(rel <= 1e-9))
        throw NumericalError("solve residual " + std::to_string(rel) +
                             " exceeds the 1e-9 contract");
    }
    stats_.solve_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++stats_.solve_count;
    return x;
  }

  std::vector<Eigen::VectorXcd> solve_many(
      const std::vector<Eigen::VectorXcd>& rhs) const {
    std::vector<Eigen::VectorXcd> out;
    out.reserve(rhs.size());
    for (const auto& b : rhs) out.push_back(solve(b));
    return out;
  }

  const SolveStats& stats() const { return stats_; }
  const Eigen::SparseMatrix<Complex>& matrix() const { return S_; }

private:
  Factorization() = default;
  void swap(Factorization& o) {
    std::swap(S_, o.S_);
    std::swap(numeric_, o.numeric_);
    std::swap(stats_, o.stats_);
    for (int i = 0; i < UMFPACK_CONTROL; ++i) std::swap(control_[i], o.control_[i]);
  }
  static const double* values(const Eigen::SparseMatrix<Complex>& S) {
    return reinterpret_cast<const double*>(S.valuePtr());
  }
  static long long factored_nonzeros(void* numeric) {
    int lnz = 0, unz = 0, nrow = 0, ncol = 0, udiag = 0;
    if (umfpack_zi_get_lunz(&lnz, &unz, &nrow, &ncol, &udiag, numeric) == UMFPACK_OK)
      return static_cast<long long>(lnz) + unz;
    return 0;
  }
  long worst_pivot(int n) const {
    if (!numeric_) return -1;
    std::vector<double> dx(n), dz(n);
    std::vector<int> q(n);
    if (umfpack_zi_get_numeric(nullptr, nullptr, nullptr, nullptr, nullptr, nullptr,
                               nullptr, nullptr, nullptr, q.data(), dx.data(),
                               dz.data(), nullptr, nullptr, numeric_) != UMFPACK_OK)
      return -1;
    long worst = 0;
    double worst_mag = std::hypot(dx[0], dz[0]);
    for (int i = 1; i < n; ++i) {
      const double mag = std::hypot(dx[i], dz[i]);
      if (mag < worst_mag) {
        worst_mag = mag;
        worst = i;
      }
    }
    return q[worst];
  }

  Eigen::SparseMatrix<Complex> S_;
  void* numeric_ = nullptr;
  double control_[UMFPACK_CONTROL] = {};
  mutable SolveStats stats_;
};

}  // namespace eddy
