#pragma once

// Periodic coefficient tensors A(y) and Lipschitz boundary graphs psi(y').
//
// A tensor A^{ab}_{ij} (a,b spatial in 1..d, i,j components in 1..N) is
// stored as a (dN)x(dN) matrix M with M(a*N+i, b*N+j) = A^{ab}_{ij}, so the
// quadratic form A xi.xi is xi^T M xi with xi(a*N+i) = xi^a_i.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "bumpy/errors.hpp"

namespace bumpy {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Uniform double in [0,1) built from the raw 64-bit engine output, so
/// sequences are identical across standard library implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

enum class CoefficientFamily { constant, laminate, trigonometric, user_sampled };

inline std::string_view to_string(CoefficientFamily f) {
  switch (f) {
    case CoefficientFamily::constant: return "constant";
    case CoefficientFamily::laminate: return "laminate";
    case CoefficientFamily::trigonometric: return "trigonometric";
    case CoefficientFamily::user_sampled: return "user-sampled";
  }
  return "?";
}

inline std::optional<CoefficientFamily> coefficient_family_from(std::string_view s) {
  if (s == "constant") return CoefficientFamily::constant;
  if (s == "laminate") return CoefficientFamily::laminate;
  if (s == "trigonometric") return CoefficientFamily::trigonometric;
  if (s == "user-sampled") return CoefficientFamily::user_sampled;
  return std::nullopt;
}

/// 1-periodic, elliptic coefficient field with pointwise evaluation.
/// Immutable after construction; evaluate() may be called concurrently.
class CoefficientField {
public:
  using Evaluator =
      std::function<void(std::span<const double> y, Eigen::Ref<Eigen::MatrixXd> out)>;

  struct Metadata {
    CoefficientFamily family = CoefficientFamily::user_sampled;
    std::vector<double> params;
    double ellipticity = 1.0;       // lambda
    double holder_exponent = 0.5;   // nu, metadata only
    double holder_seminorm = 0.0;   // declared bound on [A]_{C^{0,nu}}
    bool symmetric = true;          // M == M^T at every y
    bool translation_invariant = false;  // A independent of y
  };

  CoefficientField(int dimension, int components, Evaluator eval, Metadata meta)
      : d_(dimension), n_(components), eval_(std::move(eval)), meta_(std::move(meta)) {
    if (d_ < 2 || d_ > 3)
      throw ValidationError("coeff", fmt::format("dimension must be 2 or 3, got {}", d_));
    if (n_ < 1)
      throw ValidationError("coeff", fmt::format("system size must be >= 1, got {}", n_));
  }

  int dimension() const { return d_; }
  int components() const { return n_; }
  int block_size() const { return d_ * n_; }
  const Metadata& metadata() const { return meta_; }
  double ellipticity() const { return meta_.ellipticity; }
  bool symmetric() const { return meta_.symmetric; }
  CoefficientFamily family() const { return meta_.family; }

  void evaluate(std::span<const double> y, Eigen::Ref<Eigen::MatrixXd> out) const {
    eval_(y, out);
  }

  Eigen::MatrixXd operator()(std::span<const double> y) const {
    Eigen::MatrixXd m(block_size(), block_size());
    eval_(y, m);
    return m;
  }

  Eigen::MatrixXd operator()(double y1, double y2) const {
    const double y[2] = {y1, y2};
    return (*this)(std::span<const double>(y, 2));
  }

  /// The adjoint family A*(y)^{ab}_{ij} = A(y)^{ba}_{ji}.
  CoefficientField transposed() const {
    auto inner = eval_;
    Evaluator adj = [inner](std::span<const double> y, Eigen::Ref<Eigen::MatrixXd> out) {
      inner(y, out);
      out.transposeInPlace();
    };
    return CoefficientField(d_, n_, std::move(adj), meta_);
  }

  /// Physical coefficient x -> A(x / eps).
  void evaluate_scaled(std::span<const double> x, double eps,
                       Eigen::Ref<Eigen::MatrixXd> out) const {
    double y[3];
    for (std::size_t a = 0; a < x.size(); ++a) y[a] = x[a] / eps;
    eval_(std::span<const double>(y, x.size()), out);
  }

private:
  int d_;
  int n_;
  Evaluator eval_;
  Metadata meta_;
};

namespace detail {

inline CoefficientField scalar_field(int d, int n, std::function<double(std::span<const double>)> a,
                                     double skew, CoefficientField::Metadata meta) {
  meta.symmetric = (skew == 0.0);
  auto eval = [d, n, a = std::move(a), skew](std::span<const double> y,
                                             Eigen::Ref<Eigen::MatrixXd> out) {
    const double value = a(y);
    out.setZero();
    out.diagonal().setConstant(value);
    if (skew != 0.0) {
      // Antisymmetric perturbation in the (1,2) spatial block, inert in the
      // quadratic form.
      const double s = skew * std::sin(two_pi * y[1]);
      for (int i = 0; i < n; ++i) {
        out(0 * n + i, 1 * n + i) += s;
        out(1 * n + i, 0 * n + i) -= s;
      }
    }
    (void)d;
  };
  return CoefficientField(d, n, std::move(eval), std::move(meta));
}

inline double param_or(const std::vector<double>& p, std::size_t i, double fallback) {
  return i < p.size() ? p[i] : fallback;
}

}  // namespace detail

struct CoefficientCheck {
  double max_periodicity_defect = 0.0;
  double min_ratio = 0.0;  // min over samples of A xi.xi / |xi|^2
  double max_ratio = 0.0;  // max over samples of A xi.xi / |xi|^2
};

/// Samples periodicity and ellipticity of `a` against its declared lambda.
/// Throws ValidationError naming the first violating sample point.
inline CoefficientCheck validate_coefficients(const CoefficientField& a, int samples = 10000,
                                              std::uint64_t seed = 20240607) {
  std::mt19937_64 rng(seed);
  const int d = a.dimension();
  const int b = a.block_size();
  const double lambda = a.ellipticity();
  Eigen::MatrixXd m0(b, b), m1(b, b);
  Eigen::VectorXd xi(b);
  std::vector<double> y(d), ys(d);
  CoefficientCheck check;
  check.min_ratio = std::numeric_limits<double>::infinity();
  check.max_ratio = 0.0;
  auto point_str = [&](const std::vector<double>& p) {
    std::string s = "(";
    for (int k = 0; k < d; ++k) s += fmt::format("{}{:.6g}", k ? ", " : "", p[k]);
    return s + ")";
  };
  for (int s = 0; s < samples; ++s) {
    for (int k = 0; k < d; ++k) {
      y[k] = 4.0 * uniform01(rng) - 2.0;
      ys[k] = y[k] + std::floor(7.0 * uniform01(rng)) - 3.0;
    }
    a.evaluate(y, m0);
    a.evaluate(ys, m1);
    const double defect = (m0 - m1).cwiseAbs().maxCoeff();
    check.max_periodicity_defect = std::max(check.max_periodicity_defect, defect);
    if (defect > 1e-12)
      throw ValidationError("coeff", fmt::format("periodicity violated at y={}: |A(y+z)-A(y)|={:.3e}",
                                                 point_str(y), defect));
    for (int k = 0; k < b; ++k) xi[k] = 2.0 * uniform01(rng) - 1.0;
    const double n2 = xi.squaredNorm();
    if (n2 == 0.0) continue;
    const double ratio = xi.dot(m0 * xi) / n2;
    check.min_ratio = std::min(check.min_ratio, ratio);
    check.max_ratio = std::max(check.max_ratio, ratio);
    const double slack = 1e-12;
    if (!(lambda > 0.0) || ratio < lambda - slack || ratio > 1.0 / lambda + slack)
      throw ValidationError(
          "coeff", fmt::format("ellipticity violated at y={}: A xi.xi/|xi|^2 = {:.6g}, lambda = {:.6g}",
                               point_str(y), ratio, lambda));
  }
  return check;
}

/// Builtin coefficient families (A = a(y) Id, optionally plus an
/// antisymmetric part):
///   constant       [c=1]           a = c
///   laminate       [mean, amp]     a = mean + amp sin(2 pi y1)
///   trigonometric  [amp, skew=0]   a = 2 + amp prod_k cos(2 pi y_k),
///                                  skew adds skew sin(2 pi y2)(E12 - E21)
///   user-sampled   [n1, n2, values...]  bilinear periodic table (d = 2)
inline CoefficientField make_builtin_coefficients(CoefficientFamily family, int d, int n,
                                                  const std::vector<double>& params) {
  using detail::param_or;
  CoefficientField::Metadata meta;
  meta.family = family;
  meta.params = params;
  if (d < 2 || d > 3)
    throw ValidationError("coeff", fmt::format("dimension must be 2 or 3, got {}", d));

  auto reject_if_nonpositive = [&](double lower, std::vector<double> where) {
    if (lower > 0.0) return;
    std::string s;
    for (std::size_t k = 0; k < where.size(); ++k) s += fmt::format("{}{:.6g}", k ? ", " : "", where[k]);
    throw ValidationError("coeff",
                          fmt::format("{} params violate ellipticity: A(y) xi.xi = {:.6g} |xi|^2 at y=({})",
                                      to_string(family), lower, s));
  };

  switch (family) {
    case CoefficientFamily::constant: {
      if (params.size() > 1) throw ValidationError("coeff", "constant takes at most one parameter [c]");
      const double c = param_or(params, 0, 1.0);
      reject_if_nonpositive(c, std::vector<double>(d, 0.0));
      meta.ellipticity = std::min(c, 1.0 / c);
      meta.translation_invariant = true;
      return detail::scalar_field(d, n, [c](std::span<const double>) { return c; }, 0.0, meta);
    }
    case CoefficientFamily::laminate: {
      if (params.size() != 2) throw ValidationError("coeff", "laminate takes [mean, amplitude]");
      const double mean = params[0], amp = std::abs(params[1]);
      std::vector<double> at(d, 0.0);
      at[0] = params[1] >= 0 ? 0.75 : 0.25;
      reject_if_nonpositive(mean - amp, at);
      meta.ellipticity = std::min(mean - amp, 1.0 / (mean + amp));
      meta.holder_seminorm = two_pi * amp;
      const double a1 = params[1];
      return detail::scalar_field(
          d, n, [mean, a1](std::span<const double> y) { return mean + a1 * std::sin(two_pi * y[0]); },
          0.0, meta);
    }
    case CoefficientFamily::trigonometric: {
      if (params.empty() || params.size() > 2)
        throw ValidationError("coeff", "trigonometric takes [amplitude] or [amplitude, skew]");
      const double amp = params[0];
      const double skew = param_or(params, 1, 0.0);
      reject_if_nonpositive(2.0 - std::abs(amp), std::vector<double>(d, amp > 0 ? 0.5 : 0.0));
      meta.ellipticity = std::min(2.0 - std::abs(amp), 1.0 / (2.0 + std::abs(amp)));
      meta.holder_seminorm = two_pi * (std::abs(amp) * std::sqrt(double(d)) + std::abs(skew));
      return detail::scalar_field(
          d, n,
          [amp, d](std::span<const double> y) {
            double p = 1.0;
            for (int k = 0; k < d; ++k) p *= std::cos(two_pi * y[k]);
            return 2.0 + amp * p;
          },
          skew, meta);
    }
    case CoefficientFamily::user_sampled: {
      if (d != 2) throw ValidationError("coeff", "user-sampled tables are two-dimensional");
      if (params.size() < 2) throw ValidationError("coeff", "user-sampled takes [n1, n2, values...]");
      const int n1 = static_cast<int>(params[0]);
      const int n2 = static_cast<int>(params[1]);
      if (n1 < 1 || n2 < 1 || params[0] != n1 || params[1] != n2 ||
          params.size() != 2 + static_cast<std::size_t>(n1) * n2)
        throw ValidationError("coeff", fmt::format("user-sampled table needs {} values after [n1, n2]",
                                                   n1 > 0 && n2 > 0 ? n1 * n2 : 0));
      auto table = std::make_shared<std::vector<double>>(params.begin() + 2, params.end());
      const auto [lo, hi] = std::minmax_element(table->begin(), table->end());
      const std::ptrdiff_t at = lo - table->begin();
      reject_if_nonpositive(*lo, {double(at % n1) / n1, double(at / n1) / n2});
      meta.ellipticity = std::min(*lo, 1.0 / *hi);
      double lip = 0.0;
      for (int j = 0; j < n2; ++j)
        for (int i = 0; i < n1; ++i) {
          const double v = (*table)[j * n1 + i];
          lip = std::max(lip, std::abs((*table)[j * n1 + (i + 1) % n1] - v) * n1);
          lip = std::max(lip, std::abs((*table)[((j + 1) % n2) * n1 + i] - v) * n2);
        }
      meta.holder_seminorm = lip * std::sqrt(2.0);
      return detail::scalar_field(
          d, n,
          [table, n1, n2](std::span<const double> y) {
            const double u = (y[0] - std::floor(y[0])) * n1;
            const double v = (y[1] - std::floor(y[1])) * n2;
            const int i0 = std::min(static_cast<int>(u), n1 - 1);
            const int j0 = std::min(static_cast<int>(v), n2 - 1);
            const double fu = u - i0, fv = v - j0;
            const int i1 = (i0 + 1) % n1, j1 = (j0 + 1) % n2;
            const auto& t = *table;
            return (1 - fu) * (1 - fv) * t[j0 * n1 + i0] + fu * (1 - fv) * t[j0 * n1 + i1] +
                   (1 - fu) * fv * t[j1 * n1 + i0] + fu * fv * t[j1 * n1 + i1];
          },
          0.0, meta);
    }
  }
  throw ValidationError("coeff", "unknown coefficient family");
}

/// String-tagged overload used by the configuration layer.
inline CoefficientField make_builtin_coefficients(std::string_view family, int d, int n,
                                                  const std::vector<double>& params) {
  const auto f = coefficient_family_from(family);
  if (!f) throw ValidationError("coeff", fmt::format("unknown coefficient family '{}'", family));
  return make_builtin_coefficients(*f, d, n, params);
}

// ---------------------------------------------------------------------------
// Lipschitz graphs

enum class GraphFamily { flat, sawtooth, smooth_bump, random_piecewise_linear };

inline std::string_view to_string(GraphFamily f) {
  switch (f) {
    case GraphFamily::flat: return "flat";
    case GraphFamily::sawtooth: return "sawtooth";
    case GraphFamily::smooth_bump: return "smooth-bump";
    case GraphFamily::random_piecewise_linear: return "random-piecewise-linear";
  }
  return "?";
}

inline std::optional<GraphFamily> graph_family_from(std::string_view s) {
  if (s == "flat") return GraphFamily::flat;
  if (s == "sawtooth") return GraphFamily::sawtooth;
  if (s == "smooth-bump") return GraphFamily::smooth_bump;
  if (s == "random-piecewise-linear") return GraphFamily::random_piecewise_linear;
  return std::nullopt;
}

/// Boundary graph y' -> psi(y') over R^{d-1} with -1 < psi < 0.
class LipschitzGraph {
public:
  using Evaluator = std::function<double(std::span<const double>)>;

  struct Metadata {
    GraphFamily family = GraphFamily::flat;
    std::vector<double> params;
    double lipschitz = 0.0;  // gamma = ||grad psi||_inf
    double lower = -0.5;     // closed-form range bounds
    double upper = -0.5;
    double period = 1.0;     // horizontal period in every direction
  };

  LipschitzGraph(int dimension, Evaluator eval, Metadata meta)
      : d_(dimension), eval_(std::move(eval)), meta_(std::move(meta)) {
    if (!(meta_.lower > -1.0 && meta_.upper < 0.0))
      throw ValidationError("coeff", fmt::format("graph range [{:.6g}, {:.6g}] leaves (-1, 0)",
                                                 meta_.lower, meta_.upper));
  }

  int dimension() const { return d_; }
  double operator()(std::span<const double> yp) const { return eval_(yp); }
  double operator()(double y1) const { return eval_(std::span<const double>(&y1, 1)); }
  double lipschitz_constant() const { return meta_.lipschitz; }
  double period() const { return meta_.period; }
  const Metadata& metadata() const { return meta_; }
  GraphFamily family() const { return meta_.family; }

private:
  int d_;
  Evaluator eval_;
  Metadata meta_;
};

/// Builtin graphs (center c defaults to -0.5):
///   flat                     [c]
///   sawtooth                 [slope, c]   c + slope (dist(y1, Z) - 1/4)
///   smooth-bump              [amp, c]     c + amp sin(2 pi y1)
///   random-piecewise-linear  [amp, seed, period=8, knots_per_unit=4, c]
/// In d = 3 the sawtooth and bump average over both horizontal coordinates.
inline LipschitzGraph make_builtin_graph(GraphFamily family, const std::vector<double>& params,
                                         int d = 2) {
  using detail::param_or;
  if (d < 2 || d > 3) throw ValidationError("coeff", "graph dimension must be 2 or 3");
  const int dp = d - 1;
  LipschitzGraph::Metadata meta;
  meta.family = family;
  meta.params = params;
  switch (family) {
    case GraphFamily::flat: {
      if (params.size() != 1) throw ValidationError("coeff", "flat graph takes [c]");
      const double c = params[0];
      meta.lower = meta.upper = c;
      meta.lipschitz = 0.0;
      return LipschitzGraph(d, [c](std::span<const double>) { return c; }, meta);
    }
    case GraphFamily::sawtooth: {
      if (params.empty() || params.size() > 2) throw ValidationError("coeff", "sawtooth takes [slope, c]");
      const double slope = params[0];
      const double c = param_or(params, 1, -0.5);
      meta.lipschitz = std::abs(slope);
      meta.lower = c - 0.25 * std::abs(slope);
      meta.upper = c + 0.25 * std::abs(slope);
      return LipschitzGraph(
          d,
          [slope, c, dp](std::span<const double> y) {
            double acc = 0.0;
            for (int k = 0; k < dp; ++k) acc += std::abs(y[k] - std::round(y[k])) - 0.25;
            return c + slope * acc / dp;
          },
          meta);
    }
    case GraphFamily::smooth_bump: {
      if (params.empty() || params.size() > 2) throw ValidationError("coeff", "smooth-bump takes [amp, c]");
      const double amp = params[0];
      const double c = param_or(params, 1, -0.5);
      meta.lipschitz = two_pi * std::abs(amp);
      meta.lower = c - std::abs(amp);
      meta.upper = c + std::abs(amp);
      return LipschitzGraph(
          d,
          [amp, c, dp](std::span<const double> y) {
            double acc = 0.0;
            for (int k = 0; k < dp; ++k) acc += std::sin(two_pi * y[k]);
            return c + amp * acc / dp;
          },
          meta);
    }
    case GraphFamily::random_piecewise_linear: {
      if (params.size() < 2 || params.size() > 5)
        throw ValidationError("coeff", "random-piecewise-linear takes [amp, seed, period, knots_per_unit, c]");
      const double amp = std::abs(params[0]);
      const auto seed = static_cast<std::uint64_t>(params[1]);
      const int period = static_cast<int>(param_or(params, 2, 8));
      const int m = static_cast<int>(param_or(params, 3, 4));
      const double c = param_or(params, 4, -0.5);
      if (period < 1 || m < 1) throw ValidationError("coeff", "period and knots_per_unit must be >= 1");
      const int k = period * m;
      auto knots = std::make_shared<std::vector<double>>(dp == 1 ? k : k * k);
      std::mt19937_64 rng(seed);
      for (double& v : *knots) v = c + amp * (2.0 * uniform01(rng) - 1.0);
      const auto [lo, hi] = std::minmax_element(knots->begin(), knots->end());
      meta.lower = *lo;
      meta.upper = *hi;
      meta.period = period;
      double lip = 0.0;
      if (dp == 1) {
        for (int i = 0; i < k; ++i)
          lip = std::max(lip, std::abs((*knots)[(i + 1) % k] - (*knots)[i]) * m);
      } else {
        // |grad|^2 of a bilinear cell is convex, so its max sits at a corner.
        for (int j = 0; j < k; ++j)
          for (int i = 0; i < k; ++i) {
            const auto& t = *knots;
            const double v00 = t[j * k + i], v10 = t[j * k + (i + 1) % k];
            const double v01 = t[((j + 1) % k) * k + i], v11 = t[((j + 1) % k) * k + (i + 1) % k];
            for (int cy = 0; cy < 2; ++cy)
              for (int cx = 0; cx < 2; ++cx) {
                const double gx = m * (cy ? v11 - v01 : v10 - v00);
                const double gy = m * (cx ? v11 - v10 : v01 - v00);
                lip = std::max(lip, std::hypot(gx, gy));
              }
          }
      }
      meta.lipschitz = lip;
      return LipschitzGraph(
          d,
          [knots, k, m, dp](std::span<const double> y) {
            auto locate = [&](double t, int& i0, double& f) {
              double u = t * m;
              u -= std::floor(u / k) * k;
              i0 = std::min(static_cast<int>(u), k - 1);
              f = u - i0;
            };
            int i0, j0;
            double fu, fv;
            locate(y[0], i0, fu);
            const auto& t = *knots;
            if (dp == 1) return (1 - fu) * t[i0] + fu * t[(i0 + 1) % k];
            locate(y[1], j0, fv);
            const int i1 = (i0 + 1) % k, j1 = (j0 + 1) % k;
            return (1 - fu) * (1 - fv) * t[j0 * k + i0] + fu * (1 - fv) * t[j0 * k + i1] +
                   (1 - fu) * fv * t[j1 * k + i0] + fu * fv * t[j1 * k + i1];
          },
          meta);
    }
  }
  throw ValidationError("coeff", "unknown graph family");
}

inline LipschitzGraph make_builtin_graph(std::string_view family, const std::vector<double>& params,
                                         int d = 2) {
  const auto f = graph_family_from(family);
  if (!f) throw ValidationError("coeff", fmt::format("unknown graph family '{}'", family));
  return make_builtin_graph(*f, params, d);
}

struct GraphCheck {
  double min_value = 0.0;
  double max_value = 0.0;
  double max_difference_quotient = 0.0;
};

/// Samples the range bound -1 < psi < 0 and difference quotients <= gamma.
inline GraphCheck validate_graph(const LipschitzGraph& g, int samples = 10000,
                                 std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const int dp = g.dimension() - 1;
  GraphCheck check{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), 0.0};
  std::vector<double> a(dp), b(dp);
  for (int s = 0; s < samples; ++s) {
    double dist2 = 0.0;
    for (int k = 0; k < dp; ++k) {
      a[k] = 8.0 * uniform01(rng) - 4.0;
      const double step = (uniform01(rng) - 0.5) * (s % 2 ? 1.0 : 1e-3);
      b[k] = a[k] + step;
      dist2 += step * step;
    }
    const double pa = g(a), pb = g(b);
    check.min_value = std::min(check.min_value, pa);
    check.max_value = std::max(check.max_value, pa);
    if (!(pa > -1.0 && pa < 0.0))
      throw ValidationError("coeff", fmt::format("graph value {:.6g} at y'={:.6g} leaves (-1, 0)", pa, a[0]));
    if (dist2 > 0.0) {
      const double q = std::abs(pb - pa) / std::sqrt(dist2);
      check.max_difference_quotient = std::max(check.max_difference_quotient, q);
      if (q > g.lipschitz_constant() + 1e-9)
        throw ValidationError("coeff", fmt::format("difference quotient {:.6g} exceeds gamma {:.6g} near y'={:.6g}",
                                                   q, g.lipschitz_constant(), a[0]));
    }
  }
  return check;
}

}  // namespace bumpy
