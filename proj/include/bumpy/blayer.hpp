#pragma once

// Boundary layer in the bumpy channel {psi(y1) < y2 < 0} coupled to the
// upper half-space through the discrete DtN operator:
//   -div(A grad v) = 0 in the channel,   v = v0 on y2 = psi(y1),
//   A grad v . e2 = DtN(v(., 0)) on y2 = 0.
// v0 is lifted by V0 = v0(y1) (1 - s), linear along grid columns from the
// bottom (s = 0) to zero at the interface (s = 1); w = v - V0 solves the
// problem with flux source F = A grad V0 and homogeneous data.
// The channel (-n, n) is closed laterally either periodically (default) or
// by w = 0.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/cell.hpp"
#include "bumpy/coeff.hpp"
#include "bumpy/dtn.hpp"
#include "bumpy/elliptic.hpp"
#include "bumpy/errors.hpp"
#include "bumpy/grid.hpp"

namespace bumpy {

enum class LateralClosure { periodic, dirichlet };

/// Boundary datum v0(y1, y2, component), evaluated on the graph.
using BoundaryData = std::function<double(double, double, int)>;

struct BoundaryLayerProblem {
  std::shared_ptr<const CoefficientField> A;
  std::shared_ptr<const LipschitzGraph> psi;
  BoundaryData data;
  int truncation = 8;        // n: the channel is (-n, n)
  int cells_per_unit = 16;   // horizontal resolution, shared with the DtN strip
  int vertical_cells = 16;   // cells across the channel depth
  LateralClosure closure = LateralClosure::periodic;
  double dtn_height = 4.0;
  TopClosure dtn_top = TopClosure::dirichlet;
};

/// Data recipes: zero; constant [c]; cosine [amp, xi] = amp cos(xi y1);
/// corrector [k = 0]: component i of y2 e_k + chi^2_{.k}(y), needs correctors.
inline BoundaryData make_boundary_data(const std::string& recipe, const std::vector<double>& params,
                                       std::shared_ptr<const CellCorrectors> chi = nullptr) {
  if (recipe == "zero") return [](double, double, int) { return 0.0; };
  if (recipe == "constant") {
    const double c = params.empty() ? 1.0 : params[0];
    return [c](double, double, int) { return c; };
  }
  if (recipe == "cosine") {
    const double amp = params.size() > 0 ? params[0] : 1.0;
    const double xi = params.size() > 1 ? params[1] : std::numbers::pi;
    return [amp, xi](double y1, double, int c) { return c == 0 ? amp * std::cos(xi * y1) : 0.0; };
  }
  if (recipe == "corrector") {
    if (!chi) throw ValidationError("blayer", "corrector data needs cell correctors");
    const int k = params.empty() ? 0 : static_cast<int>(params[0]);
    if (k < 0 || k >= chi->components) throw ValidationError("blayer", "corrector column out of range");
    return [chi, k](double y1, double y2, int i) { return (i == k ? y2 : 0.0) + chi->value(1, i, k, y1, y2); };
  }
  throw ValidationError("blayer", fmt::format("unknown boundary data recipe '{}'", recipe));
}

struct LiftedData {
  DiscreteField V0;
  double energy = 0.0;                    // int |grad V0|^2 over the channel
  std::optional<double> trace_half_norm;  // |v0|_{H^{1/2}} of the bottom samples
};

namespace detail {

inline std::shared_ptr<const MappedGrid> channel_grid(const BoundaryLayerProblem& p) {
  if (!p.A || !p.psi || !p.data) throw ValidationError("blayer", "problem needs coefficients, graph and data");
  if (p.truncation < 1) throw ValidationError("blayer", "truncation n must be >= 1");
  const double n = p.truncation;
  if (p.closure == LateralClosure::periodic && std::abs((*p.psi)(n) - (*p.psi)(-n)) > 1e-12)
    throw ValidationError("blayer", fmt::format("graph is not {}-periodic; use the Dirichlet closure", 2 * n));
  return build_grid(DomainSpec::channel(-n, n, *p.psi), 2 * p.truncation * p.cells_per_unit, p.vertical_cells);
}

}  // namespace detail

inline LiftedData lift_boundary_data(const BoundaryLayerProblem& p,
                                     std::shared_ptr<const MappedGrid> grid = nullptr) {
  if (!grid) grid = detail::channel_grid(p);
  const int N = p.A->components();
  const MappedGrid& g = *grid;
  LiftedData out{DiscreteField(grid, N), 0.0, std::nullopt};
  for (int i = 0; i <= g.nx(); ++i) {
    const int b = g.node(i, 0);
    for (int c = 0; c < N; ++c) {
      const double v0 = p.data(g.x(b), g.y(b), c);
      for (int j = 0; j <= g.ny(); ++j) out.V0(g.node(i, j), c) = v0 * (1.0 - g.s(j) / g.s(g.ny()));
    }
  }
  out.energy = integrate_energy(out.V0).value;
  const int m = g.nx();
  if ((m & (m - 1)) == 0) {
    std::vector<double> y(m), v(m);
    for (int i = 0; i < m; ++i) {
      y[i] = g.xi(i);
      v[i] = out.V0(g.node(i, 0), 0);
    }
    out.trace_half_norm = h_half_norm(y, v);
  }
  return out;
}

struct BoundaryLayerSolution {
  BoundaryLayerProblem problem;
  DiscreteField w;         // v - V0
  DiscreteField v;
  LiftedData lift;
  Eigen::VectorXd trace;   // v at the interface samples
  std::shared_ptr<const DtNOperator> dtn;
  SolveReport report;
};

inline DtNConfig blayer_dtn_config(const BoundaryLayerProblem& p) {
  DtNConfig c;
  c.half_width = p.truncation;
  c.height = p.dtn_height;
  c.cells_per_unit = p.cells_per_unit;
  c.top = p.dtn_top;
  return c;
}

inline BoundaryLayerSolution solve_boundary_layer(const BoundaryLayerProblem& p,
                                                  std::shared_ptr<const DtNOperator> dtn,
                                                  const SolveOptions& opt = {}) {
  auto grid = detail::channel_grid(p);
  const int N = p.A->components();
  const int nx = grid->nx();
  if (!dtn || dtn->samples() != nx || dtn->components() != N)
    throw ValidationError("blayer", fmt::format("coupling dimension mismatch: channel has {} interface samples, "
                                                "operator has {}",
                                                nx, dtn ? dtn->samples() : 0));
  BoundaryLayerSolution out;
  out.problem = p;
  out.dtn = dtn;
  out.lift = lift_boundary_data(p, grid);

  EllipticProblem e;
  e.grid = grid;
  e.A = p.A;
  const SideCondition lateral =
      p.closure == LateralClosure::periodic ? SideCondition::periodic : SideCondition::dirichlet;
  e.sides = {SideCondition::dirichlet, SideCondition::interface, lateral, lateral};
  e.top_operator = dtn->shared_matrix();
  e.top_sample = [nx](int i) { return i % nx; };
  auto V0 = std::make_shared<const DiscreteField>(out.lift.V0);
  auto A = p.A;
  e.flux = [V0, A, N, M = Eigen::MatrixXd(2 * N, 2 * N), g = Eigen::VectorXd(2 * N)](
               const QuadPoint& q, Eigen::Ref<Eigen::VectorXd> F) mutable {
    A->evaluate(q.x, M);
    for (int c = 0; c < N; ++c) {
      const auto gr = V0->gradient(q, c);
      g[c] = gr[0];
      g[N + c] = gr[1];
    }
    F = M * g;
  };
  // The lift vanishes on the interface, so the coupling carries no source.
  const auto sys = assemble(e);
  Eigen::VectorXd x = solve_system(sys, opt, out.report, "blayer");
  out.w = sys.expand(x);
  out.v = out.w;
  out.v.values += out.lift.V0.values;
  out.trace.resize(static_cast<Eigen::Index>(nx) * N);
  for (int i = 0; i < nx; ++i)
    for (int c = 0; c < N; ++c) out.trace[i * N + c] = out.v(grid->node(i, grid->ny()), c);
  return out;
}

inline BoundaryLayerSolution solve_boundary_layer(const BoundaryLayerProblem& p, const SolveOptions& opt = {}) {
  auto dtn = std::make_shared<const DtNOperator>(assemble_dtn(p.A, blayer_dtn_config(p)));
  return solve_boundary_layer(p, dtn, opt);
}

struct UlocReport {
  double value = 0.0;                   // sup over unit windows
  std::vector<double> channel_energies; // per window, channel part
  std::vector<double> upper_energies;   // per window, half-space part
};

/// sup over integer windows (k, k+1) of the gradient energy of v in the
/// channel column plus its extension above the interface.
inline UlocReport uloc_norm(const BoundaryLayerSolution& s) {
  UlocReport out;
  const DiscreteField upper = s.dtn->extend(s.trace);
  const auto ch = uloc_energy_norm(s.v, 1.0);
  const auto up = uloc_energy_norm(upper, 1.0);
  out.channel_energies = ch.window_energies;
  out.upper_energies = up.window_energies;
  for (std::size_t k = 0; k < ch.window_energies.size(); ++k)
    out.value = std::max(out.value, ch.window_energies[k] + up.window_energies[k]);
  return out;
}

struct EnergyProfile {
  int m = 0;
  std::vector<int> k;                      // ceil(m/2) .. n - m
  std::vector<double> E;                   // E_k
  std::vector<double> E_next;              // E_{k+m}
  std::vector<double> max_cube;            // max over T in C_{k,m} of E_T
  std::vector<std::optional<double>> rho;  // Saint-Venant ratio, undefined for zero solutions
  double total = 0.0;
  double max_rho() const {
    double r = 0.0;
    for (const auto& v : rho)
      if (v) r = std::max(r, *v);
    return r;
  }
};

/// E_k = int over (-k, k) x (psi, 0) of |grad w|^2, and the ratio
///   rho_k = E_k / (k^{d-1} + (E_{k+m} - E_k) + k^{3d-5} / m^{3d-3} max_T E_T)
/// with d = 2 and T ranging over integer intervals of length m outside
/// (-(k+m-1), k+m-1) (taken modulo 2n for the periodic closure).
inline EnergyProfile energy_profile(const BoundaryLayerSolution& s, int m) {
  const int n = s.problem.truncation;
  if (m < 3) throw ValidationError("blayer", fmt::format("cube size m = {} below the minimum 3", m));
  const int k0 = (m + 1) / 2;
  if (n - m < k0 + 2)
    throw ValidationError("blayer", fmt::format("channel n = {} too narrow for three boxes at m = {}", n, m));
  const bool periodic = s.problem.closure == LateralClosure::periodic;
  const double S = s.w.grid->extent().s1;
  // Energies of the unit columns (j, j+1), j = -n .. n-1.
  std::vector<double> unit(2 * n);
  for (int j = -n; j < n; ++j) unit[j + n] = integrate_energy(s.w, RefBox{double(j), double(j + 1), 0.0, S}).value;
  auto column = [&](int j) -> double {
    if (periodic) return unit[((j + n) % (2 * n) + 2 * n) % (2 * n)];
    return (j >= -n && j < n) ? unit[j + n] : 0.0;
  };
  EnergyProfile out;
  out.m = m;
  for (double u : unit) out.total += u;
  const int d = 2;
  for (int k = k0; k <= n - m; ++k) {
    double Ek = 0.0, Ekm = 0.0;
    for (int j = -k; j < k; ++j) Ek += column(j);
    for (int j = -(k + m); j < k + m; ++j) Ekm += column(j);
    const int inner = k + m - 1;
    double cube = 0.0;
    // Left endpoints a with [a, a+m] disjoint from (-inner, inner).
    const int span = periodic ? 2 * n : 4 * n;
    for (int a = -span; a <= span; ++a) {
      bool outside = a >= inner || a + m <= -inner;
      if (periodic) {
        // Disjoint modulo 2n: the interval must fit in [inner, 2n - inner].
        const int r = ((a - inner) % (2 * n) + 2 * n) % (2 * n);
        outside = r + m <= 2 * n - 2 * inner;
      }
      if (!outside) continue;
      double e = 0.0;
      for (int j = a; j < a + m; ++j) e += column(j);
      cube = std::max(cube, e);
    }
    out.k.push_back(k);
    out.E.push_back(Ek);
    out.E_next.push_back(Ekm);
    out.max_cube.push_back(cube);
    const double denom = std::pow(k, d - 1) + (Ekm - Ek) + std::pow(k, 3 * d - 5) / std::pow(m, 3 * d - 3) * cube;
    out.rho.push_back(out.total > 0.0 ? std::optional<double>(Ek / denom) : std::nullopt);
  }
  return out;
}

struct UniformityRow {
  int n = 0;
  double uloc = 0.0;
  double max_rho = 0.0;
  double lift_energy = 0.0;
  double channel_energy = 0.0;  // int |grad w|^2
};

struct UniformityStudy {
  std::vector<UniformityRow> rows;
  std::vector<std::optional<EnergyProfile>> profiles;  // per row; empty when n is too small for m
  double last_relative_change = 0.0;  // |u(last) - u(prev)| / u(last)
};

/// Uloc norms of the boundary layer across truncations n (ascending).
inline UniformityStudy uloc_uniformity_study(BoundaryLayerProblem base, std::vector<int> truncations, int m = 4,
                                             const SolveOptions& opt = {}) {
  if (truncations.size() < 3) throw ValidationError("blayer", "uniformity study needs at least 3 truncations");
  std::sort(truncations.begin(), truncations.end());
  UniformityStudy out;
  for (int n : truncations) {
    base.truncation = n;
    const auto s = solve_boundary_layer(base, opt);
    UniformityRow r;
    r.n = n;
    r.uloc = uloc_norm(s).value;
    r.lift_energy = s.lift.energy;
    r.channel_energy = integrate_energy(s.w).value;
    std::optional<EnergyProfile> prof;
    if (n - m >= (m + 1) / 2 + 2) {
      prof = energy_profile(s, m);
      r.max_rho = prof->max_rho();
    }
    out.rows.push_back(r);
    out.profiles.push_back(std::move(prof));
  }
  const double a = out.rows[out.rows.size() - 2].uloc, b = out.rows.back().uloc;
  out.last_relative_change = b > 0.0 ? std::abs(b - a) / b : 0.0;
  return out;
}

}  // namespace bumpy
