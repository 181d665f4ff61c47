#pragma once

// Experiments on the oscillating problem in bumpy cubes
//   -div(A(x/eps) grad u) = 0 in D = {|x1| < 1, eps psi(x1/eps) < x2 < eps psi(x1/eps) + 1},
//   u = 0 on the bumpy bottom, u = g on the top and lateral sides.
// Data recipes for g (with d(x) = x2 - eps psi(x1/eps), the height above the
// bottom):
//   vertical  g = d(x)
//   tilted    g = d(x) (1 + x1 / 2)

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/blayer.hpp"
#include "bumpy/cell.hpp"
#include "bumpy/coeff.hpp"
#include "bumpy/dtn.hpp"
#include "bumpy/elliptic.hpp"
#include "bumpy/errors.hpp"
#include "bumpy/grid.hpp"
#include "bumpy/parallel.hpp"

namespace bumpy {

enum class DataRecipe { vertical, tilted };

inline std::optional<DataRecipe> data_recipe_from(std::string_view s) {
  if (s == "vertical") return DataRecipe::vertical;
  if (s == "tilted") return DataRecipe::tilted;
  return std::nullopt;
}

inline std::string_view to_string(DataRecipe r) { return r == DataRecipe::vertical ? "vertical" : "tilted"; }

struct CubeRun {
  std::shared_ptr<const MappedGrid> grid;
  DiscreteField u;
  SolveReport report;
};

/// Solves the oscillating problem on D(0,1) with `cells_per_epsilon` cells
/// per eps in each axis. `A_override` replaces A(x/eps) by a constant field.
inline CubeRun solve_bumpy_cube(std::shared_ptr<const CoefficientField> A, std::shared_ptr<const LipschitzGraph> psi,
                                double eps, int cells_per_epsilon, DataRecipe recipe,
                                std::shared_ptr<const CoefficientField> A_override = nullptr) {
  if (cells_per_epsilon < 4)
    throw ValidationError("harness", fmt::format("cells per eps {} violates the >= 4 rule", cells_per_epsilon));
  const double per = 1.0 / eps;
  if (std::abs(per - std::round(per)) > 1e-9)
    throw ValidationError("harness", fmt::format("1/eps = {:.6g} must be an integer", per));
  const int ny = static_cast<int>(std::round(per)) * cells_per_epsilon;
  CubeRun run;
  run.grid = build_grid(DomainSpec::bumpy_cube(eps, 1.0, *psi), 2 * ny, ny);
  EllipticProblem p;
  p.grid = run.grid;
  p.A = A_override ? A_override : A;
  p.epsilon = A_override ? 1.0 : eps;
  p.dirichlet = [psi, eps, recipe](double x, double y, int) {
    const double d = y - eps * (*psi)(x / eps);
    return recipe == DataRecipe::vertical ? d : d * (1.0 + 0.5 * x);
  };
  auto sol = solve(p);
  run.u = std::move(sol.u);
  run.report = std::move(sol.report);
  return run;
}

// ---------------------------------------------------------------------------
// Lipschitz-scale scan

struct ScanConfig {
  std::vector<double> epsilons{1.0 / 8, 1.0 / 16, 1.0 / 32};
  std::vector<double> radii;  // empty: `radius_points` log-spaced in [eps, 1/2]
  int radius_points = 8;
  int cells_per_epsilon = 8;
  DataRecipe recipe = DataRecipe::vertical;
};

struct LipschitzScanReport {
  std::vector<double> epsilons;
  std::vector<std::vector<double>> radii;  // per eps
  std::vector<std::vector<double>> M;      // per eps, per radius
  std::vector<double> suprema;             // max over radii per eps
  std::vector<std::pair<int, int>> resolutions;
  std::vector<SolveReport> reports;
  int cells_per_epsilon = 0;
};

inline std::vector<double> log_spaced(double a, double b, int n) {
  std::vector<double> r(n);
  for (int k = 0; k < n; ++k) r[k] = n == 1 ? a : a * std::pow(b / a, double(k) / (n - 1));
  return r;
}

/// M(eps, r) = (mean of |grad u|^2 over D(0,r)) / (mean over D(0,1)).
inline double normalized_energy(const DiscreteField& u, double r) {
  const double e1 = integrate_energy(u, RefBox{-1, 1, 0, 1}).value / 2.0;
  const double er = integrate_energy(u, RefBox{-r, r, 0, r}).value / (2.0 * r * r);
  return er / e1;
}

inline LipschitzScanReport lipschitz_scan(std::shared_ptr<const CoefficientField> A,
                                          std::shared_ptr<const LipschitzGraph> psi, const ScanConfig& cfg) {
  if (cfg.epsilons.empty()) throw ValidationError("harness", "scan needs at least one eps");
  for (double e : cfg.epsilons) {
    if (!(e > 0.0 && e <= 0.5)) throw ValidationError("harness", fmt::format("eps {:.6g} outside (0, 1/2]", e));
    for (double r : cfg.radii) {
      if (r < e * (1 - 1e-12))
        throw ValidationError("harness",
                              fmt::format("r = {:.6g} < eps = {:.6g}: the estimate holds only for r >= eps", r, e));
      if (r > 1.0) throw ValidationError("harness", fmt::format("r = {:.6g} exceeds the domain size 1", r));
    }
  }
  LipschitzScanReport rep;
  rep.cells_per_epsilon = cfg.cells_per_epsilon;
  const int n = static_cast<int>(cfg.epsilons.size());
  rep.epsilons = cfg.epsilons;
  rep.radii.resize(n);
  rep.M.resize(n);
  rep.suprema.resize(n);
  rep.resolutions.resize(n);
  rep.reports.resize(n);
  parallel_for(n, [&](int i) {
    const double eps = cfg.epsilons[i];
    rep.radii[i] = cfg.radii.empty() ? log_spaced(eps, 0.5, cfg.radius_points) : cfg.radii;
    const auto run = solve_bumpy_cube(A, psi, eps, cfg.cells_per_epsilon, cfg.recipe);
    rep.resolutions[i] = {run.grid->nx(), run.grid->ny()};
    rep.reports[i] = run.report;
    double sup = 0.0;
    for (double r : rep.radii[i]) {
      const double m = normalized_energy(run.u, r);
      rep.M[i].push_back(m);
      sup = std::max(sup, m);
    }
    rep.suprema[i] = sup;
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Homogenization check

struct HomogenizationReport {
  std::vector<double> epsilons;
  std::vector<double> l2_errors;
  double fitted_rate = 0.0;  // slope of log error against log eps
  bool monotone = false;     // errors decrease with eps
  Eigen::MatrixXd Abar;
};

/// Constant coefficient field holding a fixed tensor.
inline std::shared_ptr<const CoefficientField> constant_field(const Eigen::MatrixXd& M, int N) {
  CoefficientField::Metadata meta;
  meta.family = CoefficientFamily::constant;
  meta.translation_invariant = true;
  const Eigen::MatrixXd sym = 0.5 * (M + M.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = M.operatorNorm();
  meta.ellipticity = std::min(lo, 1.0 / hi);
  meta.symmetric = (M - M.transpose()).cwiseAbs().maxCoeff() == 0.0;
  return std::make_shared<const CoefficientField>(
      2, N, [M](std::span<const double>, Eigen::Ref<Eigen::MatrixXd> out) { out = M; }, meta);
}

/// L2 distance between u^eps and u^0 (solved with the homogenized tensor on
/// the same bumpy domain, same data) over the interior box
/// |x1| < 1/2, 1/4 < x2 - eps psi < 3/4.
inline HomogenizationReport homogenization_check(std::shared_ptr<const CoefficientField> A,
                                                 std::shared_ptr<const LipschitzGraph> psi,
                                                 std::vector<double> epsilons, int cells_per_epsilon = 8,
                                                 int cell_resolution = 64, DataRecipe recipe = DataRecipe::tilted) {
  if (epsilons.size() < 3) throw ValidationError("harness", "homogenization check needs at least 3 values of eps");
  std::sort(epsilons.begin(), epsilons.end(), std::greater<>());
  HomogenizationReport rep;
  rep.epsilons = epsilons;
  const auto chi = solve_cell(*A, cell_resolution);
  rep.Abar = homogenized_tensor(*A, chi).matrix;
  auto A0 = constant_field(rep.Abar, A->components());
  rep.l2_errors.resize(epsilons.size());
  parallel_for(static_cast<int>(epsilons.size()), [&](int i) {
    const auto ue = solve_bumpy_cube(A, psi, epsilons[i], cells_per_epsilon, recipe);
    const auto u0 = solve_bumpy_cube(A, psi, epsilons[i], cells_per_epsilon, recipe, A0);
    DiscreteField diff = ue.u;
    diff.values -= u0.u.values;
    rep.l2_errors[i] = std::sqrt(integrate_l2(diff, RefBox{-0.5, 0.5, 0.25, 0.75}).value);
  });
  rep.monotone = true;
  for (std::size_t k = 0; k + 1 < epsilons.size(); ++k)
    if (!(rep.l2_errors[k + 1] < rep.l2_errors[k])) rep.monotone = false;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    if (!(rep.l2_errors[k] > 0.0)) continue;
    const double x = std::log(epsilons[k]), y = std::log(rep.l2_errors[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  rep.fitted_rate = m >= 2 ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Excess decay

struct ExcessConfig {
  double epsilon = 1.0 / 32;
  double theta = 1.0 / 8;
  int depth = 2;            // K
  double epsilon0 = 2.0;    // floor: theta^K >= eps / eps0
  int cells_per_epsilon = 8;
  int cell_resolution = 64;
  int layer_cells_per_unit = 16;
  int layer_vertical_cells = 16;
  double layer_height = 4.0;
  DataRecipe recipe = DataRecipe::vertical;
};

struct ExcessDecayReport {
  std::vector<double> r;       // theta^k, k = 0..K
  std::vector<Eigen::VectorXd> a;  // best coefficients per scale
  std::vector<double> excess;  // normalized mean-square excess per scale
  double slope = 0.0;          // fitted d log(excess) / d log(r)
  double mu_hat = 0.0;         // (slope - 2) / 2
  double mean_dxd_theta = 0.0; // mean of d u / d x2 over D(0, theta), component 0
  double envelope = 0.0;       // Caccioppoli-type bound for |a_k|
  bool within_envelope = false;
  std::pair<int, int> resolution;
};

/// Corrector-plus-layer profile P(x) = x2 e_k + eps chi^2_{.k}(x/eps) - eps v_k(x/eps),
/// where v_k is the boundary layer with data y2 e_k + chi^2_{.k}(y) on the
/// graph, so that P vanishes on the bumpy bottom.
class ComparisonProfile {
public:
  ComparisonProfile(std::shared_ptr<const CoefficientField> A, std::shared_ptr<const LipschitzGraph> psi, double eps,
                    const ExcessConfig& cfg)
      : eps_(eps), N_(A->components()) {
    chi_ = std::make_shared<const CellCorrectors>(solve_cell(*A, cfg.cell_resolution));
    // Everything is 1-periodic in y1, so the n = 1 channel with periodic
    // closure carries the whole layer. A natural top keeps constants exact.
    for (int k = 0; k < N_; ++k) {
      BoundaryLayerProblem p;
      p.A = A;
      p.psi = psi;
      p.data = make_boundary_data("corrector", {double(k)}, chi_);
      p.truncation = 1;
      p.cells_per_unit = cfg.layer_cells_per_unit;
      p.vertical_cells = cfg.layer_vertical_cells;
      p.dtn_height = cfg.layer_height;
      p.dtn_top = TopClosure::neumann;
      auto s = solve_boundary_layer(p);
      upper_.push_back(s.dtn->extend(s.trace));
      layer_.push_back(std::move(s.v));
    }
    height_ = cfg.layer_height;
  }

  /// Component i of the k-th profile column at physical x.
  double operator()(int i, int k, double x1, double x2) const {
    const double y1 = x1 / eps_, y2 = x2 / eps_;
    const double c = chi_->value(1, i, k, y1, y2);
    return (i == k ? x2 : 0.0) + eps_ * c - eps_ * layer(i, k, y1, y2);
  }

  double layer(int i, int k, double y1, double y2) const {
    // Wrap into the computational period (-1, 1).
    double w = y1 + 1.0;
    w -= 2.0 * std::floor(w / 2.0);
    w -= 1.0;
    if (y2 <= 0.0) return layer_[k].value_at(w, y2, i);
    return upper_[k].value_at(w, std::min(y2, height_), i);
  }

  const CellCorrectors& correctors() const { return *chi_; }

private:
  double eps_;
  int N_;
  double height_ = 4.0;
  std::shared_ptr<const CellCorrectors> chi_;
  std::vector<DiscreteField> layer_, upper_;
};

inline ExcessDecayReport excess_decay(std::shared_ptr<const CoefficientField> A,
                                      std::shared_ptr<const LipschitzGraph> psi, const ExcessConfig& cfg) {
  if (!(cfg.theta > 0.0 && cfg.theta <= 0.125))
    throw ValidationError("harness", fmt::format("theta = {:.6g} outside (0, 1/8]", cfg.theta));
  if (cfg.depth < 1) throw ValidationError("harness", "depth K must be >= 1");
  const double thK = std::pow(cfg.theta, cfg.depth);
  if (thK < cfg.epsilon / cfg.epsilon0 * (1 - 1e-12))
    throw ValidationError("harness", fmt::format("theta^K = {:.6g} below eps/eps0 = {:.6g}", thK,
                                                 cfg.epsilon / cfg.epsilon0));
  const double h = cfg.epsilon / cfg.cells_per_epsilon;
  if (thK < 4.0 * h * (1 - 1e-12))
    throw ValidationError("harness", fmt::format("K too deep: theta^K = {:.6g} spans fewer than 4 cells of size {:.6g}",
                                                 thK, h));
  const int N = A->components();
  const auto run = solve_bumpy_cube(A, psi, cfg.epsilon, cfg.cells_per_epsilon, cfg.recipe);
  const ComparisonProfile P(A, psi, cfg.epsilon, cfg);

  ExcessDecayReport rep;
  rep.resolution = {run.grid->nx(), run.grid->ny()};
  const DiscreteField& u = run.u;
  const auto& g = *run.grid;
  auto mean_square_u = [&](double r) {
    double s = 0.0;
    g.for_each_quad_point(
        RefBox{-r, r, 0, r},
        [&](const QuadPoint& q) {
          for (int i = 0; i < N; ++i) s += q.weight * std::pow(u.value(q, i), 2);
        },
        3);
    return s / (2 * r * r);
  };
  const double norm2 = mean_square_u(1.0);
  for (int k = 0; k <= cfg.depth; ++k) {
    const double r = std::pow(cfg.theta, k);
    // Normal equations for min_a mean |u - sum_k a_k P_k|^2 over D(0,r).
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(N);
    Eigen::MatrixXd Pq(N, N);
    Eigen::VectorXd uq(N);
    g.for_each_quad_point(
        RefBox{-r, r, 0, r},
        [&](const QuadPoint& q) {
          for (int kk = 0; kk < N; ++kk)
            for (int i = 0; i < N; ++i) Pq(i, kk) = P(i, kk, q.x[0], q.x[1]);
          for (int i = 0; i < N; ++i) uq[i] = u.value(q, i);
          G += q.weight * Pq.transpose() * Pq;
          b += q.weight * Pq.transpose() * uq;
        },
        3);
    const Eigen::VectorXd a = N == 1 ? Eigen::VectorXd::Constant(1, b[0] / G(0, 0)) : Eigen::VectorXd(G.ldlt().solve(b));
    const double area = 2 * r * r;
    // Residual mean square, accumulated directly for accuracy near zero.
    double res = 0.0;
    g.for_each_quad_point(
        RefBox{-r, r, 0, r},
        [&](const QuadPoint& q) {
          for (int i = 0; i < N; ++i) {
            double p = 0.0;
            for (int kk = 0; kk < N; ++kk) p += a[kk] * P(i, kk, q.x[0], q.x[1]);
            res += q.weight * std::pow(u.value(q, i) - p, 2);
          }
        },
        3);
    rep.r.push_back(r);
    rep.a.push_back(a);
    rep.excess.push_back(res / area / norm2);
  }
  // Least-squares slope of log excess against log r.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const int m = static_cast<int>(rep.r.size());
  bool positive = true;
  for (int k = 0; k < m; ++k) {
    if (!(rep.excess[k] > 0.0)) {
      positive = false;
      break;
    }
    const double x = std::log(rep.r[k]), y = std::log(rep.excess[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  rep.slope = positive ? (m * sxy - sx * sy) / (m * sxx - sx * sx) : std::numeric_limits<double>::infinity();
  rep.mu_hat = (rep.slope - 2.0) / 2.0;

  // Mean vertical derivative over D(0, theta) and the coefficient envelope.
  double dxd = 0.0, grad2_half = 0.0;
  g.for_each_quad_point(RefBox{-cfg.theta, cfg.theta, 0, cfg.theta},
                        [&](const QuadPoint& q) { dxd += q.weight * u.gradient(q, 0)[1]; });
  rep.mean_dxd_theta = dxd / (2 * cfg.theta * cfg.theta);
  g.for_each_quad_point(RefBox{-0.5, 0.5, 0, 0.5}, [&](const QuadPoint& q) {
    for (int i = 0; i < N; ++i) {
      const auto gr = u.gradient(q, i);
      grad2_half += q.weight * (gr[0] * gr[0] + gr[1] * gr[1]);
    }
  });
  // Caccioppoli-scale constant: root-mean |grad u| on D(0,1/2), grown by
  // theta^{-d/2} / (1 - theta).
  rep.envelope = std::sqrt(grad2_half / 0.5) * std::pow(cfg.theta, -1.0) / (1.0 - cfg.theta);
  rep.within_envelope = true;
  for (const auto& a : rep.a)
    if (a.norm() > rep.envelope) rep.within_envelope = false;
  return rep;
}

}  // namespace bumpy
