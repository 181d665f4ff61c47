#pragma once

// Preconditioned Krylov iterations used by the cell and elliptic solvers.
// Operators and preconditioners are callables:
//   apply(const Eigen::VectorXd& x, Eigen::VectorXd& y)   y = A x
//   precond(const Eigen::VectorXd& r, Eigen::VectorXd& z) z = M^{-1} r
// An optional projection is applied to every iterate, which keeps solutions
// of singular periodic systems in the mean-zero complement.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/errors.hpp"

namespace bumpy {

struct KrylovOptions {
  double tolerance = 1e-10;  // on ||b - A x|| / ||b||
  int max_iterations = 100000;
  std::function<void(Eigen::VectorXd&)> project;
  // Record every k-th residual (always the first and last).
  int history_stride = 1;
};

struct KrylovResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;
};

using LinearMap = std::function<void(const Eigen::VectorXd&, Eigen::VectorXd&)>;

inline LinearMap sparse_map(const Eigen::SparseMatrix<double>& A) {
  return [&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = A * x; };
}

inline LinearMap jacobi_preconditioner(const Eigen::SparseMatrix<double>& A) {
  Eigen::VectorXd inv = A.diagonal();
  for (Eigen::Index i = 0; i < inv.size(); ++i) inv[i] = inv[i] != 0.0 ? 1.0 / inv[i] : 1.0;
  return [inv](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = inv.cwiseProduct(r); };
}

namespace detail {

inline void record(KrylovResult& out, const KrylovOptions& opt, int it, double rel) {
  if (opt.history_stride <= 1 || it % opt.history_stride == 0) out.history.push_back(rel);
}

[[noreturn]] inline void fail(const std::string& module, const char* method, KrylovResult& out) {
  throw SolverError(module,
                    fmt::format("{} stopped after {} iterations at relative residual {:.3e}", method,
                                out.iterations, out.relative_residual),
                    std::move(out.history));
}

}  // namespace detail

/// Preconditioned conjugate gradients for symmetric positive (semi)definite
/// systems. Throws SolverError with the residual history on failure.
inline KrylovResult pcg(const LinearMap& A, const Eigen::VectorXd& b, const LinearMap& M,
                        const KrylovOptions& opt = {}, const Eigen::VectorXd* x0 = nullptr,
                        const std::string& module = "krylov") {
  const Eigen::Index n = b.size();
  KrylovResult out;
  out.x = x0 ? *x0 : Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x.setZero();
    out.history.push_back(0.0);
    return out;
  }
  if (opt.project) opt.project(out.x);
  Eigen::VectorXd r(n), z(n), p(n), q(n);
  A(out.x, q);
  r = b - q;
  if (opt.project) opt.project(r);
  out.relative_residual = r.norm() / bnorm;
  out.history.push_back(out.relative_residual);
  if (out.relative_residual <= opt.tolerance) return out;
  M(r, z);
  if (opt.project) opt.project(z);
  p = z;
  double rz = r.dot(z);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    A(p, q);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) {
      out.iterations = it;
      detail::fail(module, "conjugate gradients (lost positivity)", out);
    }
    const double alpha = rz / pq;
    out.x += alpha * p;
    r -= alpha * q;
    if (opt.project) {
      opt.project(out.x);
      opt.project(r);
    }
    out.iterations = it;
    out.relative_residual = r.norm() / bnorm;
    detail::record(out, opt, it, out.relative_residual);
    if (out.relative_residual <= opt.tolerance) {
      // Confirm against the true residual; recurrences drift on long runs.
      A(out.x, q);
      Eigen::VectorXd rt = b - q;
      if (opt.project) opt.project(rt);
      out.relative_residual = rt.norm() / bnorm;
      if (out.relative_residual <= opt.tolerance) {
        if (out.history.back() != out.relative_residual) out.history.push_back(out.relative_residual);
        return out;
      }
      r = rt;
    }
    M(r, z);
    if (opt.project) opt.project(z);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  detail::fail(module, "conjugate gradients", out);
}

/// Right-preconditioned BiCGSTAB for non-symmetric systems.
inline KrylovResult bicgstab(const LinearMap& A, const Eigen::VectorXd& b, const LinearMap& M,
                             const KrylovOptions& opt = {}, const Eigen::VectorXd* x0 = nullptr,
                             const std::string& module = "krylov") {
  const Eigen::Index n = b.size();
  KrylovResult out;
  out.x = x0 ? *x0 : Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    out.x.setZero();
    out.history.push_back(0.0);
    return out;
  }
  if (opt.project) opt.project(out.x);
  Eigen::VectorXd r(n), rhat(n), p(n), v(n), s(n), t(n), ph(n), sh(n), tmp(n);
  A(out.x, tmp);
  r = b - tmp;
  if (opt.project) opt.project(r);
  out.relative_residual = r.norm() / bnorm;
  out.history.push_back(out.relative_residual);
  if (out.relative_residual <= opt.tolerance) return out;
  int restarts = 0;
  for (int it = 1; it <= opt.max_iterations;) {
    rhat = r;
    double rho = 1.0, alpha = 1.0, omega = 1.0;
    v.setZero();
    p.setZero();
    bool breakdown = false;
    for (; it <= opt.max_iterations; ++it) {
      const double rho_new = rhat.dot(r);
      if (std::abs(rho_new) < 1e-300) {
        breakdown = true;
        break;
      }
      const double beta = (rho_new / rho) * (alpha / omega);
      rho = rho_new;
      p = r + beta * (p - omega * v);
      M(p, ph);
      if (opt.project) opt.project(ph);
      A(ph, v);
      const double rv = rhat.dot(v);
      if (std::abs(rv) < 1e-300) {
        breakdown = true;
        break;
      }
      alpha = rho / rv;
      s = r - alpha * v;
      M(s, sh);
      if (opt.project) opt.project(sh);
      A(sh, t);
      const double tt = t.squaredNorm();
      omega = tt > 0.0 ? t.dot(s) / tt : 0.0;
      out.x += alpha * ph + omega * sh;
      r = s - omega * t;
      if (opt.project) {
        opt.project(out.x);
        opt.project(r);
      }
      out.iterations = it;
      out.relative_residual = r.norm() / bnorm;
      detail::record(out, opt, it, out.relative_residual);
      if (out.relative_residual <= opt.tolerance) {
        A(out.x, tmp);
        Eigen::VectorXd rt = b - tmp;
        if (opt.project) opt.project(rt);
        out.relative_residual = rt.norm() / bnorm;
        if (out.relative_residual <= opt.tolerance) return out;
        r = rt;
        ++it;
        break;  // restart from the true residual
      }
      if (omega == 0.0) {
        breakdown = true;
        break;
      }
    }
    if (breakdown) {
      ++it;
      if (++restarts > 50) break;
      A(out.x, tmp);
      r = b - tmp;
      if (opt.project) opt.project(r);
    }
  }
  detail::fail(module, "BiCGSTAB", out);
}

}  // namespace bumpy
