#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "bumpy/blayer.hpp"

using namespace bumpy;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const CoefficientField> field(const std::string& family, std::vector<double> params) {
  return std::make_shared<const CoefficientField>(make_builtin_coefficients(family, 2, 1, params));
}

std::shared_ptr<const LipschitzGraph> graph(const std::string& family, std::vector<double> params) {
  return std::make_shared<const LipschitzGraph>(make_builtin_graph(family, params));
}

BoundaryLayerProblem problem(std::shared_ptr<const CoefficientField> A, std::shared_ptr<const LipschitzGraph> psi,
                             BoundaryData data, int n, int cpu = 8, int vertical = 8) {
  BoundaryLayerProblem p;
  p.A = std::move(A);
  p.psi = std::move(psi);
  p.data = std::move(data);
  p.truncation = n;
  p.cells_per_unit = cpu;
  p.vertical_cells = vertical;
  return p;
}

BoundaryData corrector_data(const CoefficientField& A, int res) {
  return make_boundary_data("corrector", {}, std::make_shared<const CellCorrectors>(solve_cell(A, res)));
}

}  // namespace

TEST(Lift, ZeroAndRampData) {
  auto flat = graph("flat", {-0.5});
  auto p0 = problem(field("constant", {}), flat, make_boundary_data("zero", {}), 2);
  const auto l0 = lift_boundary_data(p0);
  EXPECT_EQ(l0.V0.values.norm(), 0.0);
  EXPECT_EQ(l0.energy, 0.0);
  auto p1 = problem(field("constant", {}), flat, make_boundary_data("constant", {1.0}), 2);
  const auto l1 = lift_boundary_data(p1);
  EXPECT_NEAR(l1.energy / 4.0, 2.0, 1e-12);  // 2 per unit length over width 4
  for (int k = 0; k < l1.V0.grid->num_nodes(); ++k)
    EXPECT_NEAR(l1.V0(k), std::clamp(-2.0 * l1.V0.grid->y(k), 0.0, 1.0), 1e-14);
}

TEST(Lift, CorrectorDataIsResolutionStable) {
  const auto A = field("trigonometric", {0.5});
  const auto data = corrector_data(*A, 32);
  auto saw = graph("sawtooth", {0.4});
  const double e1 = lift_boundary_data(problem(A, saw, data, 4, 8, 8)).energy;
  const double e2 = lift_boundary_data(problem(A, saw, data, 4, 16, 16)).energy;
  EXPECT_GT(e1, 0.0);
  EXPECT_NEAR(e1 / e2, 1.0, 0.05);
  EXPECT_TRUE(lift_boundary_data(problem(A, saw, data, 4, 8, 8)).trace_half_norm.has_value());
}

TEST(Layer, ZeroDataGivesZero) {
  const auto s = solve_boundary_layer(problem(field("trigonometric", {0.5}), graph("sawtooth", {0.4}),
                                              make_boundary_data("zero", {}), 8));
  EXPECT_EQ(s.v.values.norm(), 0.0);
  const auto prof = energy_profile(s, 3);
  for (double e : prof.E) EXPECT_EQ(e, 0.0);
  for (const auto& r : prof.rho) EXPECT_FALSE(r.has_value());
}

TEST(Layer, ConstantDataLinearProfile) {
  // Flat bottom at -1/2, DtN strip of height 4: v is linear from c to 0 over
  // the total height 4.5, so the energy per unit length is c^2 / 4.5.
  const double c = 1.5;
  const auto s = solve_boundary_layer(
      problem(field("constant", {}), graph("flat", {-0.5}), make_boundary_data("constant", {c}), 4, 8, 8));
  const auto u = uloc_norm(s);
  EXPECT_NEAR(u.value, c * c / 4.5, 1e-10);
  EXPECT_LE(u.value, c * c / 3.0);
}

TEST(Layer, CosineDataMatchesDecayingMode) {
  const auto s = solve_boundary_layer(
      problem(field("constant", {}), graph("flat", {-0.5}), make_boundary_data("cosine", {1.0, pi}), 4, 16, 16));
  const double exact = 0.5 * pi / std::tanh(pi * 4.5);  // per unit window
  const auto u = uloc_norm(s);
  EXPECT_NEAR(u.value / exact, 1.0, 0.02);
}

TEST(Layer, DomainDecompositionEquivalence) {
  const auto A = field("trigonometric", {0.5});
  auto p = problem(A, graph("sawtooth", {0.4}), make_boundary_data("cosine", {1.0, pi / 2}), 4, 8, 8);
  const auto s = solve_boundary_layer(p);
  // Independent strip solve with the channel trace as Dirichlet data.
  EllipticProblem strip;
  strip.grid = s.dtn->strip();
  strip.A = A;
  strip.sides = {SideCondition::dirichlet, SideCondition::dirichlet, SideCondition::periodic, SideCondition::periodic};
  const double h = s.dtn->spacing();
  const Eigen::VectorXd trace = s.trace;
  strip.dirichlet = [&](double x, double y, int) {
    if (y != 0.0) return 0.0;
    const int i = static_cast<int>(std::lround((x + p.truncation) / h));
    return trace[i % trace.size()];
  };
  const auto V = solve(strip).u;
  // Flux functionals on the interface nodes from both sides.
  const int nx = s.dtn->samples();
  Eigen::VectorXd upper = Eigen::VectorXd::Zero(nx), lower = Eigen::VectorXd::Zero(nx);
  Eigen::MatrixXd M(2, 2);
  auto accumulate = [&](const DiscreteField& f, int row_j, Eigen::VectorXd& out) {
    const auto& g = *f.grid;
    g.for_each_quad_point(RefBox{g.extent().xi0, g.extent().xi1, g.s(row_j), g.s(row_j + 1)}, [&](const QuadPoint& q) {
      A->evaluate(q.x, M);
      const auto gr = f.gradient(q);
      const Eigen::Vector2d flux = M * Eigen::Vector2d(gr[0], gr[1]);
      for (int a = 0; a < 4; ++a) {
        const int node = q.nodes[a];
        const int j = node / (g.nx() + 1), i = node % (g.nx() + 1);
        if (j != (row_j == 0 ? 0 : g.ny())) continue;
        out[i % nx] += q.weight * (flux[0] * q.dphi[a][0] + flux[1] * q.dphi[a][1]);
      }
    });
  };
  accumulate(V, 0, upper);
  accumulate(s.v, s.v.grid->ny() - 1, lower);
  const Eigen::VectorXd Dv = s.dtn->apply(trace);
  const double scale = Dv.cwiseAbs().maxCoeff();
  EXPECT_LE((upper + Dv).cwiseAbs().maxCoeff(), 5e-10 * scale);
  EXPECT_LE((lower - Dv).cwiseAbs().maxCoeff(), 5e-10 * scale);
}

TEST(Layer, LiftedEnergyBoundIsStable) {
  const auto A = field("trigonometric", {0.5});
  const auto data = corrector_data(*A, 32);
  std::vector<double> ratio;
  for (int cpu : {8, 16}) {
    const auto s = solve_boundary_layer(problem(A, graph("sawtooth", {0.4}), data, 4, cpu, cpu));
    ratio.push_back(integrate_energy(s.w).value / s.lift.energy);
  }
  EXPECT_NEAR(ratio[0] / ratio[1], 1.0, 0.1);
}

TEST(Layer, TranslationCovariance) {
  const auto A = field("trigonometric", {0.5, 0.3});
  const auto psi = graph("random-piecewise-linear", {0.2, 7});
  const BoundaryData data = [](double y1, double y2, int) { return std::cos(pi * y1 / 4) + 0.3 * y2; };
  auto shifted_psi = std::make_shared<const LipschitzGraph>(
      2, [psi](std::span<const double> y) { return (*psi)(y[0] + 1.0); }, psi->metadata());
  const BoundaryData shifted_data = [data](double y1, double y2, int c) { return data(y1 + 1.0, y2, c); };
  const int cpu = 8;
  const auto s = solve_boundary_layer(problem(A, psi, data, 8, cpu, 8));
  const auto t = solve_boundary_layer(problem(A, shifted_psi, shifted_data, 8, cpu, 8));
  const auto& g = *s.w.grid;
  double worst = 0.0;
  for (int j = 0; j <= g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      worst = std::max(worst, std::abs(t.w(g.node(i, j)) - s.w(g.node((i + cpu) % g.nx(), j))));
  EXPECT_LE(worst, 1e-8);
}

TEST(Layer, ClosuresAgreeInTheInterior) {
  const auto A = field("trigonometric", {0.5});
  auto p = problem(A, graph("sawtooth", {0.4}), make_boundary_data("constant", {1.0}), 16);
  const auto per = solve_boundary_layer(p);
  p.closure = LateralClosure::dirichlet;
  const auto dir = solve_boundary_layer(p);
  const double a = integrate_energy(per.v, RefBox{-1, 1, 0, 1}).value;
  const double b = integrate_energy(dir.v, RefBox{-1, 1, 0, 1}).value;
  EXPECT_NEAR(a / b, 1.0, 0.1);
}

TEST(Profile, MonotoneAndBoundedRatios) {
  const auto A = field("trigonometric", {0.5});
  const auto data = corrector_data(*A, 32);
  const auto s = solve_boundary_layer(problem(A, graph("sawtooth", {0.4}), data, 16));
  const auto prof = energy_profile(s, 4);
  ASSERT_GE(prof.E.size(), 3u);
  for (std::size_t k = 0; k + 1 < prof.E.size(); ++k) EXPECT_LE(prof.E[k], prof.E[k + 1]);
  for (double e : prof.E) EXPECT_LE(e, prof.total * (1 + 1e-12));
  for (const auto& r : prof.rho) {
    ASSERT_TRUE(r.has_value());
    EXPECT_GT(*r, 0.0);
    EXPECT_TRUE(std::isfinite(*r));
  }
  EXPECT_THROW(energy_profile(s, 2), ValidationError);
  EXPECT_THROW(energy_profile(s, 12), ValidationError);
}

TEST(Uniformity, SawtoothPlateau) {
  const auto A = field("trigonometric", {0.5});
  BoundaryLayerProblem base = problem(A, graph("sawtooth", {0.4}), corrector_data(*A, 32), 8);
  const auto study = uloc_uniformity_study(base, {4, 8, 16});
  ASSERT_EQ(study.rows.size(), 3u);
  EXPECT_LE(study.last_relative_change, 0.10);
  EXPECT_NEAR(study.rows[1].uloc / study.rows[2].uloc, 1.0, 0.10);
}

TEST(Uniformity, ZeroDataFlat) {
  BoundaryLayerProblem base = problem(field("constant", {}), graph("flat", {-0.5}), make_boundary_data("zero", {}), 4);
  const auto study = uloc_uniformity_study(base, {2, 3, 4});
  for (const auto& r : study.rows) EXPECT_EQ(r.uloc, 0.0);
  EXPECT_THROW(uloc_uniformity_study(base, {2, 3}), ValidationError);
}

TEST(Layer, Refusals) {
  const auto A = field("constant", {});
  auto p = problem(A, graph("flat", {-0.5}), make_boundary_data("zero", {}), 4);
  DtNConfig c;
  c.half_width = 2;
  c.cells_per_unit = 8;
  auto wrong = std::make_shared<const DtNOperator>(assemble_dtn(A, c));
  EXPECT_THROW(solve_boundary_layer(p, wrong), ValidationError);
  auto q = problem(A, graph("random-piecewise-linear", {0.2, 1}), make_boundary_data("zero", {}), 3);
  EXPECT_THROW(solve_boundary_layer(q), ValidationError);
  EXPECT_THROW(make_boundary_data("corrector", {}), ValidationError);
  EXPECT_THROW(make_boundary_data("spline", {}), ValidationError);
}
