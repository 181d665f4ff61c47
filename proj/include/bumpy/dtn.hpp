#pragma once

// Discrete Dirichlet-to-Neumann operator of the upper half-space, realized
// on the strip (-L, L) x (0, H), periodic in y1, closed at y2 = H by a
// homogeneous Dirichlet (default) or natural condition.
//
// With K the strip stiffness split into interface (bottom, G) and interior (I)
// unknowns, the operator is minus the Schur complement,
//   D = -(K_GG - K_GI K_II^{-1} K_IG),
// so that w^T D v = -int A grad V . grad W over the discrete extensions. D is
// a Galerkin matrix: its rows are flux functionals, not pointwise fluxes.

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/coeff.hpp"
#include "bumpy/elliptic.hpp"
#include "bumpy/errors.hpp"
#include "bumpy/grid.hpp"

namespace bumpy {

enum class TopClosure { dirichlet, neumann };

struct DtNConfig {
  double half_width = 1.0;  // L
  double height = 4.0;      // H
  int cells_per_unit = 16;  // horizontal cells per unit length
  int vertical_cells = 0;   // 0: same spacing as horizontally
  TopClosure top = TopClosure::dirichlet;
  // Compute one period of columns and fill the rest by the shift symmetry
  // D(i+p, j+p) = D(i, j) of the periodic strip.
  bool exploit_translation = true;
};

class DtNOperator {
public:
  const Eigen::MatrixXd& matrix() const { return *matrix_; }
  std::shared_ptr<const Eigen::MatrixXd> shared_matrix() const { return matrix_; }
  const DtNConfig& config() const { return config_; }
  int samples() const { return samples_; }  // interface nodes
  int components() const { return components_; }
  double spacing() const { return 1.0 / config_.cells_per_unit; }
  double sample_x(int i) const { return -config_.half_width + i * spacing(); }
  const std::shared_ptr<const MappedGrid>& strip() const { return strip_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const { return *matrix_ * v; }

  /// <D v, w> = w^T D v.
  double form(const Eigen::VectorXd& v, const Eigen::VectorXd& w) const { return w.dot(*matrix_ * v); }

  /// Discrete extension of an interface trace into the strip.
  DiscreteField extend(const Eigen::VectorXd& trace) const {
    if (trace.size() != static_cast<Eigen::Index>(samples_) * components_)
      throw ValidationError("dtn", fmt::format("trace length {} != {}", trace.size(), samples_ * components_));
    Eigen::VectorXd rhs = kig_ * trace;
    Eigen::VectorXd vi = -solve_interior_(rhs);
    Eigen::VectorXd x(num_free_);
    for (std::size_t k = 0; k < gamma_.size(); ++k) x[gamma_[k]] = trace[static_cast<Eigen::Index>(k)];
    for (std::size_t k = 0; k < interior_.size(); ++k) x[interior_[k]] = vi[static_cast<Eigen::Index>(k)];
    return expand_(x);
  }

private:
  friend DtNOperator assemble_dtn(std::shared_ptr<const CoefficientField>, const DtNConfig&);

  DtNConfig config_;
  int samples_ = 0;
  int components_ = 1;
  int num_free_ = 0;
  std::shared_ptr<const Eigen::MatrixXd> matrix_;
  std::shared_ptr<const MappedGrid> strip_;
  std::vector<int> gamma_, interior_;
  Eigen::SparseMatrix<double> kig_;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> solve_interior_;
  std::function<DiscreteField(const Eigen::VectorXd&)> expand_;
};

inline DtNOperator assemble_dtn(std::shared_ptr<const CoefficientField> A, const DtNConfig& cfg) {
  if (!A) throw ValidationError("dtn", "no coefficient field");
  if (!(cfg.height >= 2.0))
    throw ValidationError("dtn", fmt::format("strip height {:.6g} below the minimum 2", cfg.height));
  if (cfg.cells_per_unit < 1) throw ValidationError("dtn", "cells_per_unit must be >= 1");
  const double width = 2.0 * cfg.half_width;
  const double cells = width * cfg.cells_per_unit;
  if (!(cfg.half_width > 0.0) || std::abs(cells - std::round(cells)) > 1e-9)
    throw ValidationError("dtn", fmt::format("2L = {:.6g} is not a whole number of cells", width));
  const bool invariant = A->metadata().translation_invariant;
  if (!invariant && std::abs(width - std::round(width)) > 1e-9)
    throw ValidationError("dtn", fmt::format("period 2L = {:.6g} is not a multiple of the coefficient period", width));
  const int nx = static_cast<int>(std::round(cells));
  const int ny = cfg.vertical_cells > 0 ? cfg.vertical_cells
                                        : static_cast<int>(std::ceil(cfg.height * cfg.cells_per_unit - 1e-9));
  const int N = A->components();

  EllipticProblem p;
  p.grid = build_grid(DomainSpec::flat_strip(cfg.half_width, cfg.height), nx, ny);
  p.A = A;
  p.sides = {SideCondition::natural, cfg.top == TopClosure::dirichlet ? SideCondition::dirichlet : SideCondition::natural,
             SideCondition::periodic, SideCondition::periodic};
  auto sys = std::make_shared<AssembledSystem>(assemble(p));

  DtNOperator op;
  op.config_ = cfg;
  op.samples_ = nx;
  op.components_ = N;
  op.strip_ = p.grid;
  const int nf = sys->num_free * N;
  op.num_free_ = nf;
  std::vector<int> pos(nf, -1);
  std::vector<char> on_gamma(nf, 0);
  for (int i = 0; i < nx; ++i)
    for (int c = 0; c < N; ++c) {
      const int d = sys->free_index[p.grid->node(i, 0)] * N + c;
      pos[d] = static_cast<int>(op.gamma_.size());
      on_gamma[d] = 1;
      op.gamma_.push_back(d);
    }
  for (int d = 0; d < nf; ++d)
    if (!on_gamma[d]) {
      pos[d] = static_cast<int>(op.interior_.size());
      op.interior_.push_back(d);
    }
  const int M = static_cast<int>(op.gamma_.size());
  const int nI = static_cast<int>(op.interior_.size());

  Eigen::MatrixXd kgg = Eigen::MatrixXd::Zero(M, M);
  std::vector<Eigen::Triplet<double>> tii, tig, tgi;
  for (int col = 0; col < sys->K.outerSize(); ++col)
    for (Eigen::SparseMatrix<double>::InnerIterator it(sys->K, col); it; ++it) {
      const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
      if (on_gamma[r] && on_gamma[c])
        kgg(pos[r], pos[c]) += it.value();
      else if (on_gamma[r])
        tgi.emplace_back(pos[r], pos[c], it.value());
      else if (on_gamma[c])
        tig.emplace_back(pos[r], pos[c], it.value());
      else
        tii.emplace_back(pos[r], pos[c], it.value());
    }
  Eigen::SparseMatrix<double> kii(nI, nI), kgi(M, nI);
  op.kig_.resize(nI, M);
  kii.setFromTriplets(tii.begin(), tii.end());
  kgi.setFromTriplets(tgi.begin(), tgi.end());
  op.kig_.setFromTriplets(tig.begin(), tig.end());
  kii.makeCompressed();

  if (sys->symmetric) {
    auto f = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(kii);
    if (f->info() != Eigen::Success)
      throw SolverError("dtn", "interior block factorization failed (non-coercive strip)", {});
    op.solve_interior_ = [f](const Eigen::VectorXd& b) -> Eigen::VectorXd { return f->solve(b); };
  } else {
    auto f = std::make_shared<Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>>>();
    f->compute(kii);
    if (f->info() != Eigen::Success)
      throw SolverError("dtn", "interior block factorization failed (non-coercive strip)", {});
    op.solve_interior_ = [f](const Eigen::VectorXd& b) -> Eigen::VectorXd { return f->solve(b); };
  }
  op.expand_ = [sys](const Eigen::VectorXd& x) { return sys->expand(x); };

  // Shift period in interface samples.
  int period = nx;
  if (cfg.exploit_translation) period = invariant ? 1 : cfg.cells_per_unit;
  if (nx % period != 0) period = nx;

  auto S = std::make_shared<Eigen::MatrixXd>(M, M);
  Eigen::VectorXd rhs(nI), x(nI);
  for (int j = 0; j < period * N; ++j) {
    rhs = op.kig_.col(j);
    x = op.solve_interior_(rhs);
    S->col(j) = -(kgg.col(j) - kgi * x);
  }
  for (int q = 1; q < nx / period; ++q) {
    const int shift = q * period * N;
    for (int j = 0; j < period * N; ++j)
      for (int i = 0; i < M; ++i) (*S)((i + shift) % M, j + shift) = (*S)(i, j);
  }
  op.matrix_ = S;
  return op;
}

/// cos(xi (y - y0)) sampled at the interface nodes, component c.
inline Eigen::VectorXd dtn_mode(const DtNOperator& op, double xi, int c = 0) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(op.samples() * op.components());
  for (int i = 0; i < op.samples(); ++i) v[i * op.components() + c] = std::cos(xi * op.sample_x(i));
  return v;
}

struct SymbolRow {
  int mode = 0;
  double xi = 0.0;
  double form_per_length = 0.0;  // <D v, v> / L for v = cos(xi y)
  double identity_symbol = 0.0;  // -xi coth(xi H), or -xi tanh(xi H) for a natural top
};

/// Form values on the Fourier modes xi = pi j / L.
inline std::vector<SymbolRow> dtn_symbol(const DtNOperator& op, const std::vector<int>& modes) {
  std::vector<SymbolRow> rows;
  const double L = op.config().half_width, H = op.config().height;
  for (int j : modes) {
    SymbolRow r;
    r.mode = j;
    r.xi = std::numbers::pi * j / L;
    const Eigen::VectorXd v = dtn_mode(op, r.xi);
    r.form_per_length = op.form(v, v) / L;
    if (j == 0)
      r.identity_symbol = op.config().top == TopClosure::dirichlet ? -2.0 / H : 0.0;
    else
      r.identity_symbol = op.config().top == TopClosure::dirichlet ? -r.xi / std::tanh(r.xi * H)
                                                                   : -r.xi * std::tanh(r.xi * H);
    rows.push_back(r);
  }
  return rows;
}

struct TruncationRow {
  double height = 0.0;
  double operator_distance = 0.0;  // ||D_H - D_ref||_F / ||D_ref||_F
  double mode_form = 0.0;          // <D v, v>/L on the probe mode
  double mode_distance = 0.0;      // |mode_form - reference mode_form|
};

struct TruncationStudy {
  double reference_height = 0.0;
  double probe_xi = 0.0;
  std::vector<TruncationRow> rows;  // ascending heights, excluding the reference
  bool insufficient = false;        // fewer than 3 heights
};

/// Operators at every height against the one at the largest height.
inline TruncationStudy dtn_truncation_study(std::shared_ptr<const CoefficientField> A, DtNConfig base,
                                            std::vector<double> heights, int probe_mode = 1) {
  if (heights.empty()) throw ValidationError("dtn", "truncation study needs at least one height");
  std::sort(heights.begin(), heights.end());
  TruncationStudy out;
  out.insufficient = heights.size() < 3;
  out.reference_height = heights.back();
  out.probe_xi = std::numbers::pi * probe_mode / base.half_width;
  base.vertical_cells = 0;
  base.height = heights.back();
  const DtNOperator ref = assemble_dtn(A, base);
  const Eigen::VectorXd v = dtn_mode(ref, out.probe_xi);
  const double ref_form = ref.form(v, v) / base.half_width;
  const double ref_norm = ref.matrix().norm();
  if (heights.size() == 1) {
    out.rows.push_back({heights[0], 0.0, ref_form, 0.0});
    return out;
  }
  for (std::size_t k = 0; k + 1 < heights.size(); ++k) {
    base.height = heights[k];
    const DtNOperator op = assemble_dtn(A, base);
    TruncationRow r;
    r.height = heights[k];
    r.operator_distance = (op.matrix() - ref.matrix()).norm() / ref_norm;
    r.mode_form = op.form(v, v) / base.half_width;
    r.mode_distance = std::abs(r.mode_form - ref_form);
    out.rows.push_back(r);
  }
  return out;
}

/// max over modes j = 0..max_mode of |<D v_j, v_j>| / |v_j|_{H^{1/2}}^2.
inline double dtn_continuity_constant(const DtNOperator& op, int max_mode) {
  std::vector<double> y(op.samples()), v(op.samples());
  for (int i = 0; i < op.samples(); ++i) y[i] = op.sample_x(i);
  double c = 0.0;
  for (int j = 0; j <= max_mode; ++j) {
    const double xi = std::numbers::pi * j / op.config().half_width;
    const Eigen::VectorXd m = dtn_mode(op, xi);
    for (int i = 0; i < op.samples(); ++i) v[i] = m[i * op.components()];
    const double n = h_half_norm(y, v);
    c = std::max(c, std::abs(op.form(m, m)) / (n * n));
  }
  return c;
}

struct KernelProbeConfig {
  double half_width = 48.0;
  double height = 48.0;
  double h = 0.25;
  double line_height = 1.0;  // y2 of the sampling line
  double fit_min = 4.0;      // offsets |y1 - source| used in the fit
  double fit_max = 16.0;
};

struct KernelProbe {
  int source_index = 0;
  double source_x = 0.0;
  std::vector<double> offsets;  // all sampled offsets to the right of the source
  std::vector<double> values;   // P at (source + offset, line_height)
  double exponent = 0.0;        // fitted slope of log|P| against log offset
  int fit_points = 0;
};

/// Discrete Poisson kernel of the strip: solves with boundary datum 1/h at
/// one bottom node (unit mass), zero Dirichlet on the top, periodic sides,
/// and fits the decay along a horizontal line.
inline KernelProbe kernel_decay_probe(std::shared_ptr<const CoefficientField> A, const KernelProbeConfig& cfg,
                                      double source_x = 0.0, double amplitude = 1.0) {
  if (amplitude == 0.0) throw ValidationError("dtn", "zero boundary data: the probe field vanishes");
  const double L = cfg.half_width;
  if (source_x < -L + 0.5 * L || source_x > L - 0.5 * L)
    throw ValidationError("dtn", "source closer to the lateral edges than a quarter of the width");
  const int nx = static_cast<int>(std::round(2 * L / cfg.h));
  const int ny = static_cast<int>(std::round(cfg.height / cfg.h));
  const int src = static_cast<int>(std::round((source_x + L) / cfg.h));
  const int line = static_cast<int>(std::round(cfg.line_height / cfg.h));
  const int c0 = static_cast<int>(std::ceil(cfg.fit_min / cfg.h - 1e-9));
  const int c1 = static_cast<int>(std::floor(cfg.fit_max / cfg.h + 1e-9));
  if (c1 - c0 + 1 < 8 || src + c1 > nx)
    throw ValidationError("dtn", fmt::format("kernel fit over {} points refused (need >= 8)", std::max(0, c1 - c0 + 1)));

  EllipticProblem p;
  p.grid = build_grid(DomainSpec::flat_strip(L, cfg.height), nx, ny);
  p.A = A;
  p.sides = {SideCondition::dirichlet, SideCondition::dirichlet, SideCondition::periodic, SideCondition::periodic};
  const double sx = p.grid->xi(src), mass = amplitude / cfg.h;
  p.dirichlet = [sx, mass, h = cfg.h](double x, double y, int c) {
    return (c == 0 && y == 0.0 && std::abs(x - sx) < 0.5 * h) ? mass : 0.0;
  };
  const auto sol = solve(p);

  KernelProbe out;
  out.source_index = src;
  out.source_x = sx;
  double sx_ = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 1; src + k <= std::min(nx, src + 2 * c1); ++k) {
    const double d = k * cfg.h;
    const double v = sol.u(p.grid->node(src + k, line)) / amplitude;
    out.offsets.push_back(d);
    out.values.push_back(v);
    if (k >= c0 && k <= c1) {
      const double lx = std::log(d), ly = std::log(std::abs(v));
      sx_ += lx;
      sy += ly;
      sxx += lx * lx;
      sxy += lx * ly;
      ++out.fit_points;
    }
  }
  const double n = out.fit_points;
  out.exponent = (n * sxy - sx_ * sy) / (n * sxx - sx_ * sx_);
  return out;
}

}  // namespace bumpy
