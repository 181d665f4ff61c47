#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "bumpy/dtn.hpp"

using namespace bumpy;

namespace {

constexpr double pi = std::numbers::pi;

std::shared_ptr<const CoefficientField> field(const std::string& family, std::vector<double> params, int N = 1) {
  return std::make_shared<const CoefficientField>(make_builtin_coefficients(family, 2, N, params));
}

DtNConfig small(double L = 1.0, int cpu = 8, double H = 2.0) {
  DtNConfig c;
  c.half_width = L;
  c.cells_per_unit = cpu;
  c.height = H;
  return c;
}

}  // namespace

TEST(DtN, IdentitySymbolOnFourierModes) {
  const auto op = assemble_dtn(field("constant", {}), small(1.0, 32, 2.0));
  for (const auto& r : dtn_symbol(op, {1, 2, 3, 4}))
    EXPECT_NEAR(r.form_per_length / r.identity_symbol, 1.0, 0.02) << "mode " << r.mode;
}

TEST(DtN, ConstantTraceSeesTheLinearProfile) {
  const auto op = assemble_dtn(field("constant", {}), small(1.0, 16, 3.0));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(op.samples());
  const Eigen::VectorXd d = op.apply(ones);
  for (Eigen::Index i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i] / op.spacing(), -1.0 / 3.0, 1e-12);
  const auto ext = op.extend(ones);
  for (int k = 0; k < ext.grid->num_nodes(); ++k) EXPECT_NEAR(ext(k), 1.0 - ext.grid->y(k) / 3.0, 1e-12);
}

TEST(DtN, NaturalTopClosure) {
  auto cfg = small(1.0, 32, 2.0);
  cfg.top = TopClosure::neumann;
  const auto op = assemble_dtn(field("constant", {}), cfg);
  EXPECT_LE(op.apply(Eigen::VectorXd::Ones(op.samples())).cwiseAbs().maxCoeff(), 1e-12);
  for (const auto& r : dtn_symbol(op, {1, 2, 3}))
    EXPECT_NEAR(r.form_per_length / r.identity_symbol, 1.0, 0.02);
}

TEST(DtN, NegativeSemidefiniteOnRandomTraces) {
  std::mt19937_64 rng(17);
  for (const auto& A : {field("constant", {}), field("trigonometric", {0.5}), field("trigonometric", {0.5, 0.8}),
                        field("laminate", {2, 1}, 2)}) {
    const auto op = assemble_dtn(A, small(2.0, 8, 2.0));
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd v(op.samples() * op.components());
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = 2 * uniform01(rng) - 1;
      EXPECT_LE(op.form(v, v), 1e-10 * v.squaredNorm());
    }
  }
}

TEST(DtN, SymmetricForSymmetricCoefficients) {
  for (const auto& A : {field("trigonometric", {0.5}), field("laminate", {2, 1})}) {
    const auto op = assemble_dtn(A, small(1.0, 8, 2.0));
    const Eigen::MatrixXd& D = op.matrix();
    EXPECT_LE((D - D.transpose()).norm(), 1e-8 * D.norm());
  }
  const auto skew = assemble_dtn(field("trigonometric", {0.5, 0.8}), small(1.0, 8, 2.0));
  EXPECT_GT((skew.matrix() - skew.matrix().transpose()).norm(), 1e-6 * skew.matrix().norm());
}

TEST(DtN, TranslationFillMatchesFullAssembly) {
  for (const auto& A : {field("constant", {}), field("trigonometric", {0.5, 0.8}), field("laminate", {2, 1}, 2)}) {
    auto cfg = small(2.0, 8, 2.0);
    const auto fast = assemble_dtn(A, cfg);
    cfg.exploit_translation = false;
    const auto full = assemble_dtn(A, cfg);
    EXPECT_LE((fast.matrix() - full.matrix()).cwiseAbs().maxCoeff(), 1e-10 * full.matrix().cwiseAbs().maxCoeff());
  }
}

TEST(DtN, SchurComplementMatchesExtensionEnergy) {
  const auto A = field("trigonometric", {0.5, 0.6});
  const auto op = assemble_dtn(A, small(1.0, 8, 2.0));
  std::mt19937_64 rng(23);
  Eigen::VectorXd v(op.samples()), w(op.samples());
  for (int i = 0; i < op.samples(); ++i) {
    v[i] = uniform01(rng);
    w[i] = uniform01(rng);
  }
  const auto V = op.extend(v), W = op.extend(w);
  double bilinear = 0.0;
  Eigen::MatrixXd M(2, 2);
  V.grid->for_each_quad_point([&](const QuadPoint& q) {
    A->evaluate(q.x, M);
    const auto gv = V.gradient(q), gw = W.gradient(q);
    Eigen::Vector2d a(gv[0], gv[1]), b(gw[0], gw[1]);
    bilinear += q.weight * b.dot(M * a);
  });
  EXPECT_NEAR(op.form(v, w), -bilinear, 1e-10 * std::abs(bilinear));
}

TEST(DtN, RefusesBadConfigurations) {
  EXPECT_THROW(assemble_dtn(field("constant", {}), small(1.0, 8, 1.5)), ValidationError);
  EXPECT_THROW(assemble_dtn(field("trigonometric", {0.5}), small(0.75, 8, 2.0)), ValidationError);
  EXPECT_NO_THROW(assemble_dtn(field("constant", {}), small(0.75, 8, 2.0)));
}

TEST(DtN, ContinuityConstantStableUnderRefinement) {
  const auto A = field("trigonometric", {0.5});
  std::vector<double> c;
  for (int cpu : {16, 32, 64}) c.push_back(dtn_continuity_constant(assemble_dtn(A, small(2.0, cpu, 2.0)), 4));
  for (double v : c) EXPECT_NEAR(v / c.back(), 1.0, 0.2);
}

TEST(Truncation, IdentityModeDecaysLikeCoth) {
  const auto study = dtn_truncation_study(field("constant", {}), small(1.0, 32), {2.0, 2.25, 2.5, 2.75, 3.0});
  ASSERT_EQ(study.rows.size(), 4u);
  EXPECT_FALSE(study.insufficient);
  const double xi = pi;
  auto coth = [](double t) { return 1.0 / std::tanh(t); };
  for (std::size_t k = 0; k < study.rows.size(); ++k) {
    const auto& r = study.rows[k];
    const double exact = xi * std::abs(coth(xi * r.height) - coth(xi * 3.0));
    EXPECT_NEAR(r.mode_distance / exact, 1.0, 0.1) << "H=" << r.height;
    if (k > 0) EXPECT_LE(r.mode_distance, 0.5 * study.rows[k - 1].mode_distance);
  }
}

TEST(Truncation, OscillatingDistancesDecrease) {
  const auto study = dtn_truncation_study(field("trigonometric", {0.5}), small(1.0, 8), {2.0, 2.5, 3.0, 4.0});
  for (std::size_t k = 1; k < study.rows.size(); ++k)
    EXPECT_LT(study.rows[k].operator_distance, study.rows[k - 1].operator_distance);
}

TEST(Truncation, SingleHeightIsFlagged) {
  const auto study = dtn_truncation_study(field("constant", {}), small(1.0, 8), {2.0});
  EXPECT_TRUE(study.insufficient);
  EXPECT_EQ(study.rows.size(), 1u);
}

TEST(Kernel, HalfPlaneDecay) {
  const auto probe = kernel_decay_probe(field("constant", {}), {});
  EXPECT_GE(probe.fit_points, 8);
  EXPECT_NEAR(probe.exponent, -2.0, 0.3);
  // Pointwise agreement with (1/pi) y / (d^2 + y^2) away from the source.
  for (std::size_t k = 0; k < probe.offsets.size(); ++k) {
    const double d = probe.offsets[k];
    if (d < 2.0 || d > 8.0) continue;
    EXPECT_NEAR(probe.values[k] / (1.0 / pi / (d * d + 1.0)), 1.0, 0.1) << "d=" << d;
  }
}

TEST(Kernel, OscillatingDecay) {
  const auto probe = kernel_decay_probe(field("trigonometric", {0.5}), {});
  EXPECT_LE(probe.exponent, -1.5);
}

TEST(Kernel, Refusals) {
  EXPECT_THROW(kernel_decay_probe(field("constant", {}), {}, 0.0, 0.0), ValidationError);
  KernelProbeConfig tight;
  tight.fit_min = 4.0;
  tight.fit_max = 5.0;
  tight.h = 0.5;
  EXPECT_THROW(kernel_decay_probe(field("constant", {}), tight), ValidationError);
  EXPECT_THROW(kernel_decay_probe(field("constant", {}), {}, 40.0), ValidationError);
}
