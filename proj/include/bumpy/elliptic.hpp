#pragma once

// Bilinear finite elements for -div(A(x/eps) grad u) = f + div F on mapped
// grids. The weak form is
//   a(u, phi) = int A^{ab}_{ij} d_b u_j d_a phi_i
//             = int f.phi - int F.grad phi + <top load, phi> ,
// and an optional dense operator D on the top trace enters as
//   a(u, phi) - phi_top^T D u_top,
// which is how a Dirichlet-to-Neumann condition A grad u.e_2 = D u couples in.

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <array>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/coeff.hpp"
#include "bumpy/errors.hpp"
#include "bumpy/grid.hpp"
#include "bumpy/krylov.hpp"

namespace bumpy {

enum class SideCondition { dirichlet, natural, periodic, interface };
enum Side { side_bottom = 0, side_top = 1, side_left = 2, side_right = 3 };

struct EllipticProblem {
  std::shared_ptr<const MappedGrid> grid;
  std::shared_ptr<const CoefficientField> A;
  double epsilon = 1.0;  // the coefficient is sampled as A(x / epsilon)
  // f at a quadrature point, N entries.
  std::function<void(const QuadPoint&, Eigen::Ref<Eigen::VectorXd>)> source;
  // F at a quadrature point, 2N entries, F^a_i at a*N+i.
  std::function<void(const QuadPoint&, Eigen::Ref<Eigen::VectorXd>)> flux;
  // Dirichlet data g(x, y, component); zero when unset.
  std::function<double(double, double, int)> dirichlet;
  std::array<SideCondition, 4> sides{SideCondition::dirichlet, SideCondition::dirichlet,
                                     SideCondition::dirichlet, SideCondition::dirichlet};
  // Interface operator on the top trace (sides[side_top] == interface).
  std::shared_ptr<const Eigen::MatrixXd> top_operator;
  // Grid column -> interface sample index; identity when unset.
  std::function<int(int)> top_sample;
  // Extra load on top nodes, (nx+1)*N functional values; empty for none.
  Eigen::VectorXd top_load;
};

/// Free-unknown linear system with Dirichlet values eliminated.
struct AssembledSystem {
  std::shared_ptr<const MappedGrid> grid;
  int components = 1;
  Eigen::SparseMatrix<double> K;
  Eigen::VectorXd load;
  std::vector<int> free_index;      // per node: index of its free slot, -1 if Dirichlet
  Eigen::VectorXd boundary_values;  // nodal Dirichlet data, zero elsewhere
  int num_free = 0;
  bool symmetric = true;
  bool singular = false;            // fully periodic: constants in the kernel

  DiscreteField expand(const Eigen::VectorXd& x) const {
    DiscreteField u(grid, components, boundary_values);
    for (int k = 0; k < grid->num_nodes(); ++k)
      if (free_index[k] >= 0)
        for (int c = 0; c < components; ++c) u(k, c) = x[free_index[k] * components + c];
    return u;
  }

  Eigen::VectorXd restrict_to_free(const DiscreteField& u) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(num_free) * components);
    for (int k = 0; k < grid->num_nodes(); ++k)
      if (free_index[k] >= 0)
        for (int c = 0; c < components; ++c) x[free_index[k] * components + c] = u(k, c);
    return x;
  }
};

namespace detail {

inline void validate_problem(const EllipticProblem& p) {
  if (!p.grid) throw ValidationError("elliptic", "problem has no grid");
  if (!p.A) throw ValidationError("elliptic", "problem has no coefficient field");
  if (p.A->dimension() != 2)
    throw ValidationError("elliptic", fmt::format("solver is two-dimensional, coefficient dimension is {}",
                                                  p.A->dimension()));
  auto periodic = [&](Side s) { return p.sides[s] == SideCondition::periodic; };
  if (periodic(side_left) != periodic(side_right) || periodic(side_bottom) != periodic(side_top))
    throw ValidationError("elliptic", "periodic pairing needs both opposite sides periodic");
  for (Side s : {side_bottom, side_left, side_right})
    if (p.sides[s] == SideCondition::interface)
      throw ValidationError("elliptic", "interface coupling is only available on the top side");
  if (p.sides[side_top] == SideCondition::interface && !p.top_operator)
    throw ValidationError("elliptic", "top side is an interface but no operator was given");
  if (p.sides[side_top] != SideCondition::interface && p.top_operator)
    throw ValidationError("elliptic", "interface operator given but the top side is not an interface");
  const int N = p.A->components();
  if (p.top_load.size() != 0 && p.top_load.size() != (p.grid->nx() + 1) * N)
    throw ValidationError("elliptic", "top load length does not match the top nodes");
  // Cheap sampled ellipticity probe; rejects degenerate fields before any work.
  validate_coefficients(*p.A, 256, 7);
}

}  // namespace detail

inline AssembledSystem assemble(const EllipticProblem& p) {
  detail::validate_problem(p);
  const MappedGrid& g = *p.grid;
  const int N = p.A->components();
  const int nx = g.nx(), ny = g.ny();
  const bool px = p.sides[side_left] == SideCondition::periodic;
  const bool py = p.sides[side_bottom] == SideCondition::periodic;

  AssembledSystem sys;
  sys.grid = p.grid;
  sys.components = N;
  sys.symmetric = p.A->symmetric();
  sys.singular = px && py;
  const int nn = g.num_nodes();

  // Periodic representative of every node.
  std::vector<int> rep(nn);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      rep[g.node(i, j)] = g.node(px && i == nx ? 0 : i, py && j == ny ? 0 : j);
  std::vector<char> is_dirichlet(nn, 0);
  for (int k = 0; k < nn; ++k) {
    const unsigned f = g.flags(k);
    const bool d = ((f & bottom) && p.sides[side_bottom] == SideCondition::dirichlet) ||
                   ((f & top) && p.sides[side_top] == SideCondition::dirichlet) ||
                   ((f & left) && p.sides[side_left] == SideCondition::dirichlet) ||
                   ((f & right) && p.sides[side_right] == SideCondition::dirichlet);
    if (d) is_dirichlet[rep[k]] = 1;
  }
  sys.free_index.assign(nn, -1);
  for (int k = 0; k < nn; ++k)
    if (rep[k] == k && !is_dirichlet[k]) sys.free_index[k] = sys.num_free++;
  for (int k = 0; k < nn; ++k) sys.free_index[k] = sys.free_index[rep[k]];

  sys.boundary_values = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nn) * N);
  if (p.dirichlet)
    for (int k = 0; k < nn; ++k)
      if (is_dirichlet[rep[k]])
        for (int c = 0; c < N; ++c) sys.boundary_values[k * N + c] = p.dirichlet(g.x(k), g.y(k), c);

  const Eigen::Index nf = static_cast<Eigen::Index>(sys.num_free) * N;
  sys.load = Eigen::VectorXd::Zero(nf);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(g.num_cells()) * 16 * N * N);

  const int B = 2 * N;
  Eigen::MatrixXd Ke = Eigen::MatrixXd::Zero(4 * N, 4 * N);
  Eigen::VectorXd fe = Eigen::VectorXd::Zero(4 * N);
  Eigen::MatrixXd M(B, B);
  Eigen::VectorXd fq(N), Fq(B);
  std::array<int, 4> cell_nodes{};
  int current = -1;

  auto flush = [&] {
    if (current < 0) return;
    for (int a = 0; a < 4; ++a) {
      const int fa = sys.free_index[cell_nodes[a]];
      if (fa < 0) continue;
      for (int i = 0; i < N; ++i) {
        const int row = fa * N + i;
        sys.load[row] += fe[a * N + i];
        for (int b = 0; b < 4; ++b) {
          const int fb = sys.free_index[cell_nodes[b]];
          for (int j = 0; j < N; ++j) {
            const double v = Ke(a * N + i, b * N + j);
            if (fb >= 0)
              trip.emplace_back(row, fb * N + j, v);
            else
              sys.load[row] -= v * sys.boundary_values[cell_nodes[b] * N + j];
          }
        }
      }
    }
    Ke.setZero();
    fe.setZero();
  };

  g.for_each_quad_point([&](const QuadPoint& q) {
    if (q.cell != current) {
      flush();
      current = q.cell;
      cell_nodes = q.nodes;
    }
    p.A->evaluate_scaled(q.x, p.epsilon, M);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j) {
            double s = 0.0;
            for (int al = 0; al < 2; ++al)
              for (int be = 0; be < 2; ++be) s += M(al * N + i, be * N + j) * q.dphi[b][be] * q.dphi[a][al];
            Ke(a * N + i, b * N + j) += q.weight * s;
          }
    if (p.source) {
      p.source(q, fq);
      for (int a = 0; a < 4; ++a)
        for (int i = 0; i < N; ++i) fe[a * N + i] += q.weight * fq[i] * q.phi[a];
    }
    if (p.flux) {
      p.flux(q, Fq);
      for (int a = 0; a < 4; ++a)
        for (int i = 0; i < N; ++i)
          fe[a * N + i] -= q.weight * (Fq[i] * q.dphi[a][0] + Fq[N + i] * q.dphi[a][1]);
    }
  });
  flush();

  if (p.top_load.size() != 0)
    for (int i = 0; i <= nx; ++i) {
      const int k = g.node(i, ny);
      const int f = sys.free_index[k];
      if (f < 0) continue;
      for (int c = 0; c < N; ++c) sys.load[f * N + c] += p.top_load[i * N + c];
    }

  if (p.top_operator) {
    const Eigen::MatrixXd& D = *p.top_operator;
    const int columns = px ? nx : nx + 1;
    std::vector<int> sample(columns);
    std::vector<char> seen(D.rows() / N + 1, 0);
    for (int i = 0; i < columns; ++i) {
      sample[i] = p.top_sample ? p.top_sample(i) : i;
      if (sample[i] < 0 || (sample[i] + 1) * N > D.rows() || D.rows() != D.cols())
        throw ValidationError("elliptic", fmt::format("interface operator of size {}x{} does not cover top column {}",
                                                      D.rows(), D.cols(), i));
      // Dirichlet columns may share a sample (e.g. both ends of a closed
      // channel); only free columns must map one-to-one.
      if (sys.free_index[g.node(i, ny)] >= 0 && seen[sample[i]]++)
        throw ValidationError("elliptic", fmt::format("two top columns map to interface sample {}", sample[i]));
    }
    for (int a = 0; a < columns; ++a) {
      const int fa = sys.free_index[g.node(a, ny)];
      if (fa < 0) continue;
      for (int b = 0; b < columns; ++b) {
        const int kb = g.node(b, ny);
        const int fb = sys.free_index[kb];
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j) {
            const double v = -D(sample[a] * N + i, sample[b] * N + j);
            if (fb >= 0)
              trip.emplace_back(fa * N + i, fb * N + j, v);
            else
              sys.load[fa * N + i] -= v * sys.boundary_values[kb * N + j];
          }
      }
    }
    const double scale = D.cwiseAbs().maxCoeff();
    if ((D - D.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) sys.symmetric = false;
  }

  sys.K.resize(nf, nf);
  sys.K.setFromTriplets(trip.begin(), trip.end());
  sys.K.makeCompressed();
  return sys;
}

enum class SolverChoice { automatic, jacobi, incomplete, direct };

struct SolveOptions {
  SolverChoice method = SolverChoice::automatic;
  double tolerance = 1e-10;
  int max_iterations = 100000;
};

struct SolveReport {
  std::string method;
  int iterations = 0;
  double relative_residual = 0.0;
  std::vector<double> history;
};

struct EllipticSolution {
  DiscreteField u;
  SolveReport report;
};

/// Projection of an N-component free vector onto zero component means.
inline std::function<void(Eigen::VectorXd&)> mean_zero_projection(int N) {
  return [N](Eigen::VectorXd& x) {
    const Eigen::Index n = x.size() / N;
    for (int c = 0; c < N; ++c) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < n; ++k) s += x[k * N + c];
      s /= static_cast<double>(n);
      for (Eigen::Index k = 0; k < n; ++k) x[k * N + c] -= s;
    }
  };
}

/// Solves K x = load. Singular (fully periodic) systems are solved in the
/// mean-zero complement. Automatic selection uses an exact sparse
/// factorization as the Krylov preconditioner: LDLT for symmetric systems
/// (conjugate gradients), LU otherwise (BiCGSTAB).
inline Eigen::VectorXd solve_system(const AssembledSystem& sys, const SolveOptions& opt,
                                    SolveReport& report, const std::string& module = "elliptic") {
  const Eigen::SparseMatrix<double>& K = sys.K;
  KrylovOptions ko;
  ko.tolerance = opt.tolerance;
  ko.max_iterations = opt.max_iterations;
  if (sys.singular) ko.project = mean_zero_projection(sys.components);
  Eigen::VectorXd rhs = sys.load;
  if (ko.project) ko.project(rhs);

  SolverChoice method = opt.method;
  if (method == SolverChoice::automatic) method = sys.singular ? SolverChoice::jacobi : SolverChoice::direct;

  LinearMap precond;
  // Factorizations live here so the preconditioner closures stay valid.
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  Eigen::IncompleteCholesky<double> ichol;
  Eigen::IncompleteLUT<double> ilut;
  switch (method) {
    case SolverChoice::jacobi:
    case SolverChoice::automatic:
      precond = jacobi_preconditioner(K);
      report.method = "jacobi";
      break;
    case SolverChoice::direct:
      if (sys.singular) throw ValidationError(module, "direct factorization of a singular periodic system");
      if (sys.symmetric) {
        ldlt.compute(K);
        if (ldlt.info() != Eigen::Success) throw SolverError(module, "LDLT factorization failed", {});
        precond = [&ldlt](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = ldlt.solve(r); };
        report.method = "ldlt";
      } else {
        lu.compute(K);
        if (lu.info() != Eigen::Success) throw SolverError(module, "LU factorization failed", {});
        precond = [&lu](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = lu.solve(r); };
        report.method = "lu";
      }
      break;
    case SolverChoice::incomplete:
      if (sys.symmetric) {
        ichol.compute(K);
        if (ichol.info() != Eigen::Success) throw SolverError(module, "incomplete Cholesky failed", {});
        precond = [&ichol](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = ichol.solve(r); };
        report.method = "ichol";
      } else {
        ilut.compute(K);
        if (ilut.info() != Eigen::Success) throw SolverError(module, "incomplete LU failed", {});
        precond = [&ilut](const Eigen::VectorXd& r, Eigen::VectorXd& z) { z = ilut.solve(r); };
        report.method = "ilut";
      }
      break;
  }
  KrylovResult res = sys.symmetric ? pcg(sparse_map(K), rhs, precond, ko, nullptr, module)
                                   : bicgstab(sparse_map(K), rhs, precond, ko, nullptr, module);
  report.method += sys.symmetric ? "+cg" : "+bicgstab";
  report.iterations = res.iterations;
  report.relative_residual = res.relative_residual;
  report.history = std::move(res.history);
  return std::move(res.x);
}

inline EllipticSolution solve(const AssembledSystem& sys, const SolveOptions& opt = {}) {
  EllipticSolution out;
  const Eigen::VectorXd x = solve_system(sys, opt, out.report);
  out.u = sys.expand(x);
  return out;
}

inline EllipticSolution solve(const EllipticProblem& p, const SolveOptions& opt = {}) {
  return solve(assemble(p), opt);
}

}  // namespace bumpy
