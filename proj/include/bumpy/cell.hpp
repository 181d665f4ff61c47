#pragma once

// Periodic cell problems on the unit torus and the homogenized tensor.
//
// For every direction g and component k the corrector column chi^g_{.k}
// (N components) solves
//   int A^{ab}_{ij} d_b chi^g_{jk} d_a phi_i = - int A^{ag}_{ik} d_a phi_i
// for all periodic phi, with zero mean, i.e. -div(A grad chi^g) = d_a A^{ag}
// with the right-hand side moved onto the test gradients. Then
//   Abar^{ab}_{ik} = int A^{ab}_{ik} + int A^{ag}_{ij} d_g chi^b_{jk}.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <vector>

#include <fmt/format.h>

#include "bumpy/coeff.hpp"
#include "bumpy/elliptic.hpp"
#include "bumpy/errors.hpp"
#include "bumpy/grid.hpp"

namespace bumpy {

namespace detail {

/// Samples of A at fixed points, used to tie correctors to their field.
inline Eigen::VectorXd coefficient_fingerprint(const CoefficientField& A) {
  const int B = A.block_size();
  Eigen::VectorXd out(16 * B * B);
  Eigen::MatrixXd m(B, B);
  for (int s = 0; s < 16; ++s) {
    const double y[2] = {0.1234 + 0.0617 * s, 0.7071 - 0.0433 * s};
    A.evaluate(std::span<const double>(y, 2), m);
    out.segment(s * B * B, B * B) = Eigen::Map<const Eigen::VectorXd>(m.data(), B * B);
  }
  return out;
}

}  // namespace detail

struct CellCorrectors {
  int resolution = 0;
  int components = 1;
  std::shared_ptr<const MappedGrid> grid;
  std::vector<DiscreteField> columns;  // index g*N + k, each with N components
  std::vector<SolveReport> reports;
  Eigen::VectorXd fingerprint;

  const DiscreteField& column(int g, int k = 0) const { return columns[g * components + k]; }

  /// chi^g_{ik}(y), periodically extended.
  double value(int g, int i, int k, double y1, double y2) const {
    return column(g, k).value_at(y1 - std::floor(y1), y2 - std::floor(y2), i);
  }

  /// Integral of chi^g_{ik} over the torus.
  double mean(int g, int i, int k) const {
    return integrate_mean(column(g, k), i);
  }

private:
  static double integrate_mean(const DiscreteField& f, int i) {
    double s = 0.0;
    f.grid->for_each_quad_point([&](const QuadPoint& q) { s += q.weight * f.value(q, i); });
    return s;
  }
};

struct HomogenizedTensor {
  Eigen::MatrixXd matrix;    // (2N)x(2N), same layout as CoefficientField
  double ellipticity = 0.0;  // smallest eigenvalue of the symmetric part
};

inline CellCorrectors solve_cell(const CoefficientField& A, int resolution, const SolveOptions& opt = {}) {
  if (A.dimension() != 2)
    throw ValidationError("cell", fmt::format("cell solver is two-dimensional, got d={}", A.dimension()));
  if (resolution < 8) throw ValidationError("cell", fmt::format("resolution {} below the minimum 8", resolution));
  const int N = A.components();
  CellCorrectors out;
  out.resolution = resolution;
  out.components = N;
  out.grid = build_grid(DomainSpec::rectangle(0.0, 1.0, 0.0, 1.0), resolution, resolution);
  out.fingerprint = detail::coefficient_fingerprint(A);

  EllipticProblem p;
  p.grid = out.grid;
  p.A = std::make_shared<const CoefficientField>(A);
  p.sides = {SideCondition::periodic, SideCondition::periodic, SideCondition::periodic, SideCondition::periodic};
  AssembledSystem sys = assemble(p);

  // Loads for every (g, k) in one pass over the quadrature points.
  const int B = 2 * N;
  std::vector<Eigen::VectorXd> loads(2 * N, Eigen::VectorXd::Zero(sys.load.size()));
  Eigen::MatrixXd M(B, B);
  out.grid->for_each_quad_point([&](const QuadPoint& q) {
    A.evaluate(q.x, M);
    for (int a = 0; a < 4; ++a) {
      const int f = sys.free_index[q.nodes[a]];
      for (int g = 0; g < 2; ++g)
        for (int k = 0; k < N; ++k)
          for (int i = 0; i < N; ++i)
            loads[g * N + k][f * N + i] -=
                q.weight * (M(i, g * N + k) * q.dphi[a][0] + M(N + i, g * N + k) * q.dphi[a][1]);
    }
  });

  SolveOptions so = opt;
  if (so.method == SolverChoice::automatic) so.method = SolverChoice::jacobi;
  for (int gk = 0; gk < 2 * N; ++gk) {
    sys.load = loads[gk];
    SolveReport rep;
    const Eigen::VectorXd x = solve_system(sys, so, rep, "cell");
    out.columns.push_back(sys.expand(x));
    out.reports.push_back(std::move(rep));
  }
  return out;
}

inline HomogenizedTensor homogenized_tensor(const CoefficientField& A, const CellCorrectors& chi) {
  if (A.components() != chi.components || A.dimension() != 2)
    throw ValidationError("cell", "coefficient shape differs from the correctors'");
  if ((detail::coefficient_fingerprint(A) - chi.fingerprint).cwiseAbs().maxCoeff() > 1e-14)
    throw ValidationError("cell", "correctors were solved for a different coefficient field");
  const int N = chi.components;
  const int B = 2 * N;
  HomogenizedTensor out;
  out.matrix = Eigen::MatrixXd::Zero(B, B);
  Eigen::MatrixXd M(B, B), G(B, B);  // G(g*N+j, b*N+k) = d_g chi^b_{jk}
  chi.grid->for_each_quad_point([&](const QuadPoint& q) {
    A.evaluate(q.x, M);
    for (int b = 0; b < 2; ++b)
      for (int k = 0; k < N; ++k) {
        const DiscreteField& col = chi.column(b, k);
        for (int j = 0; j < N; ++j) {
          const auto gr = col.gradient(q, j);
          G(0 * N + j, b * N + k) = gr[0];
          G(1 * N + j, b * N + k) = gr[1];
        }
      }
    out.matrix += q.weight * (M + M * G);
  });
  const Eigen::MatrixXd sym = 0.5 * (out.matrix + out.matrix.transpose());
  out.ellipticity = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym).eigenvalues().minCoeff();
  return out;
}

/// Largest |grad chi^2_{.k}| over quadrature points: discrete proxy for the
/// Lipschitz bound of the vertical corrector.
inline double vertical_corrector_gradient_bound(const CellCorrectors& chi) {
  double m = 0.0;
  const int N = chi.components;
  chi.grid->for_each_quad_point([&](const QuadPoint& q) {
    for (int k = 0; k < N; ++k)
      for (int i = 0; i < N; ++i) {
        const auto gr = chi.column(1, k).gradient(q, i);
        m = std::max(m, std::hypot(gr[0], gr[1]));
      }
  });
  return m;
}

/// Energy int A grad chi^g_{.k} . grad chi^g_{.k} over the torus.
inline double corrector_energy(const CoefficientField& A, const CellCorrectors& chi, int g, int k = 0) {
  return integrate_energy(chi.column(g, k), EnergyWeight{&A, 1.0}).value;
}

}  // namespace bumpy
