#pragma once

// Boundary-fitted tensor grids, nodal fields, quadrature and the energy and
// norm functionals built on them.
//
// A grid lives on a reference rectangle (xi, s) in [x0,x1] x [0,S]. Every
// column is mapped vertically and linearly:
//   x = xi,   y = b(xi) + (t(xi) - b(xi)) * s / S,
// with b, t the bottom/top heights sampled at the nodes and linearly
// interpolated in between. For a bumpy cube t = b + S, so the map is a pure
// vertical shear with unit Jacobian determinant. Elements are isoparametric
// bilinear quadrilaterals; subregions are boxes in reference coordinates.

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/coeff.hpp"
#include "bumpy/errors.hpp"

namespace bumpy {

enum class DomainKind { bumpy_cube, channel, box };

/// Geometry of a two-dimensional computational domain.
struct DomainSpec {
  DomainKind kind = DomainKind::box;
  double epsilon = 1.0;  // oscillation scale of the lower boundary
  double r = 1.0;        // bumpy cube half-width and height
  double x0 = 0.0, x1 = 1.0;  // horizontal extent (channel, box)
  double y0 = 0.0, y1 = 1.0;  // vertical extent (box)
  std::shared_ptr<const LipschitzGraph> graph;

  /// D = {|x1| < r, eps psi(x1/eps) < x2 < eps psi(x1/eps) + r}.
  static DomainSpec bumpy_cube(double eps, double r, LipschitzGraph g) {
    DomainSpec d;
    d.kind = DomainKind::bumpy_cube;
    d.epsilon = eps;
    d.r = r;
    d.x0 = -r;
    d.x1 = r;
    d.graph = std::make_shared<const LipschitzGraph>(std::move(g));
    return d;
  }

  /// {x0 < y1 < x1, psi(y1) < y2 < 0}.
  static DomainSpec channel(double x0, double x1, LipschitzGraph g) {
    DomainSpec d;
    d.kind = DomainKind::channel;
    d.x0 = x0;
    d.x1 = x1;
    d.graph = std::make_shared<const LipschitzGraph>(std::move(g));
    return d;
  }

  static DomainSpec rectangle(double x0, double x1, double y0, double y1) {
    DomainSpec d;
    d.kind = DomainKind::box;
    d.x0 = x0;
    d.x1 = x1;
    d.y0 = y0;
    d.y1 = y1;
    return d;
  }

  /// (-L, L) x (0, H).
  static DomainSpec flat_strip(double half_width, double height) {
    return rectangle(-half_width, half_width, 0.0, height);
  }

  double reference_height() const {
    switch (kind) {
      case DomainKind::bumpy_cube: return r;
      case DomainKind::channel: return 1.0;
      case DomainKind::box: return y1 - y0;
    }
    return 1.0;
  }
};

enum NodeFlag : unsigned { bottom = 1u, top = 2u, left = 4u, right = 8u };

/// Axis-aligned box in reference coordinates (xi, s).
struct RefBox {
  double xi0, xi1, s0, s1;
};

/// Data of one quadrature point inside one cell.
struct QuadPoint {
  std::array<double, 2> x;    // physical coordinates
  std::array<double, 2> ref;  // reference coordinates (xi, s)
  double weight;              // Gauss weight times |det J|
  int cell;
  std::array<int, 4> nodes;   // (i,j), (i+1,j), (i,j+1), (i+1,j+1)
  std::array<double, 4> phi;
  std::array<std::array<double, 2>, 4> dphi;  // physical gradients
};

class MappedGrid {
public:
  MappedGrid(DomainSpec spec, int nx, int ny) : spec_(std::move(spec)), nx_(nx), ny_(ny) {
    const double S = spec_.reference_height();
    xi_.resize(nx_ + 1);
    s_.resize(ny_ + 1);
    for (int i = 0; i <= nx_; ++i) xi_[i] = spec_.x0 + (spec_.x1 - spec_.x0) * i / nx_;
    for (int j = 0; j <= ny_; ++j) s_[j] = S * j / ny_;
    bottom_.resize(nx_ + 1);
    top_.resize(nx_ + 1);
    for (int i = 0; i <= nx_; ++i) {
      const double x = xi_[i];
      switch (spec_.kind) {
        case DomainKind::bumpy_cube: {
          const double e = spec_.epsilon;
          bottom_[i] = e * (*spec_.graph)(x / e);
          top_[i] = bottom_[i] + spec_.r;
          break;
        }
        case DomainKind::channel:
          bottom_[i] = (*spec_.graph)(x);
          top_[i] = 0.0;
          break;
        case DomainKind::box:
          bottom_[i] = spec_.y0;
          top_[i] = spec_.y1;
          break;
      }
    }
    const int n = num_nodes();
    X_.resize(n);
    Y_.resize(n);
    flags_.assign(n, 0u);
    for (int j = 0; j <= ny_; ++j)
      for (int i = 0; i <= nx_; ++i) {
        const int k = node(i, j);
        X_[k] = xi_[i];
        Y_[k] = bottom_[i] + (top_[i] - bottom_[i]) * (s_[j] / S);
        unsigned f = 0;
        if (j == 0) f |= bottom;
        if (j == ny_) f |= top;
        if (i == 0) f |= left;
        if (i == nx_) f |= right;
        flags_[k] = f;
      }
  }

  const DomainSpec& spec() const { return spec_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int num_nodes() const { return (nx_ + 1) * (ny_ + 1); }
  int num_cells() const { return nx_ * ny_; }
  int node(int i, int j) const { return j * (nx_ + 1) + i; }
  double x(int k) const { return X_[k]; }
  double y(int k) const { return Y_[k]; }
  unsigned flags(int k) const { return flags_[k]; }
  double xi(int i) const { return xi_[i]; }
  double s(int j) const { return s_[j]; }
  double hx() const { return (spec_.x1 - spec_.x0) / nx_; }
  double hs() const { return spec_.reference_height() / ny_; }
  double bottom_height(int i) const { return bottom_[i]; }
  double top_height(int i) const { return top_[i]; }
  RefBox extent() const { return {spec_.x0, spec_.x1, 0.0, spec_.reference_height()}; }

  /// Largest |dy/dxi| of the bottom boundary over the grid columns.
  double max_bottom_slope() const {
    double m = 0.0;
    for (int i = 0; i < nx_; ++i) m = std::max(m, std::abs(bottom_[i + 1] - bottom_[i]) / hx());
    return m;
  }

  /// Visits quadrature points of every cell overlapping `box`, clipped to
  /// it. `order` Gauss points per axis (2 or 3).
  template <class F>
  void for_each_quad_point(const RefBox& box, F&& f, int order = 2) const {
    static constexpr double g2[2] = {0.5 - 0.5 / 1.7320508075688772, 0.5 + 0.5 / 1.7320508075688772};
    static constexpr double w2[2] = {0.5, 0.5};
    static const double g3[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
    static constexpr double w3[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    const double* gp = order == 3 ? g3 : g2;
    const double* gw = order == 3 ? w3 : w2;
    const int ng = order == 3 ? 3 : 2;
    const double hx_ = hx(), hs_ = hs();
    const int i_lo = std::max(0, static_cast<int>(std::floor((box.xi0 - spec_.x0) / hx_)) - 1);
    const int i_hi = std::min(nx_, static_cast<int>(std::ceil((box.xi1 - spec_.x0) / hx_)) + 1);
    const int j_lo = std::max(0, static_cast<int>(std::floor(box.s0 / hs_)) - 1);
    const int j_hi = std::min(ny_, static_cast<int>(std::ceil(box.s1 / hs_)) + 1);
    QuadPoint q;
    for (int j = j_lo; j < j_hi; ++j)
      for (int i = i_lo; i < i_hi; ++i) {
        const double a0 = std::max(box.xi0, xi_[i]), a1 = std::min(box.xi1, xi_[i + 1]);
        const double c0 = std::max(box.s0, s_[j]), c1 = std::min(box.s1, s_[j + 1]);
        if (a1 - a0 <= 1e-14 * hx_ || c1 - c0 <= 1e-14 * hs_) continue;
        const double u0 = (a0 - xi_[i]) / hx_, du = (a1 - a0) / hx_;
        const double v0 = (c0 - s_[j]) / hs_, dv = (c1 - c0) / hs_;
        q.cell = j * nx_ + i;
        q.nodes = {node(i, j), node(i + 1, j), node(i, j + 1), node(i + 1, j + 1)};
        for (int b = 0; b < ng; ++b)
          for (int a = 0; a < ng; ++a) {
            const double u = u0 + du * gp[a], v = v0 + dv * gp[b];
            fill_point(q, u, v);
            q.ref = {xi_[i] + u * hx_, s_[j] + v * hs_};
            q.weight *= gw[a] * gw[b] * du * dv;
            f(static_cast<const QuadPoint&>(q));
          }
      }
  }

  template <class F>
  void for_each_quad_point(F&& f, int order = 2) const {
    for_each_quad_point(extent(), std::forward<F>(f), order);
  }

  /// Shape data at local coordinates (u, v) in [0,1]^2 of the cell stored in
  /// q.nodes; sets x, phi, dphi and weight = |det J| (per unit local area).
  void fill_point(QuadPoint& q, double u, double v) const {
    q.phi = {(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v};
    const double du[4] = {-(1 - v), (1 - v), -v, v};
    const double dv[4] = {-(1 - u), -u, (1 - u), u};
    double j11 = 0, j12 = 0, j21 = 0, j22 = 0, x = 0, y = 0;
    for (int a = 0; a < 4; ++a) {
      const double X = X_[q.nodes[a]], Y = Y_[q.nodes[a]];
      x += q.phi[a] * X;
      y += q.phi[a] * Y;
      j11 += du[a] * X;
      j12 += dv[a] * X;
      j21 += du[a] * Y;
      j22 += dv[a] * Y;
    }
    const double det = j11 * j22 - j12 * j21;
    for (int a = 0; a < 4; ++a) {
      q.dphi[a][0] = (j22 * du[a] - j21 * dv[a]) / det;
      q.dphi[a][1] = (-j12 * du[a] + j11 * dv[a]) / det;
    }
    q.x = {x, y};
    q.weight = std::abs(det);
  }

  /// Cell and local coordinates of a physical point, or nullopt outside.
  std::optional<std::pair<int, std::array<double, 2>>> locate(double x, double y) const {
    const double tol = 1e-12 * (spec_.x1 - spec_.x0);
    if (x < spec_.x0 - tol || x > spec_.x1 + tol) return std::nullopt;
    double u = (x - spec_.x0) / hx();
    int i = std::clamp(static_cast<int>(std::floor(u)), 0, nx_ - 1);
    u = std::clamp(u - i, 0.0, 1.0);
    const double B = (1 - u) * bottom_[i] + u * bottom_[i + 1];
    const double T = (1 - u) * top_[i] + u * top_[i + 1];
    const double sigma = (y - B) / (T - B);
    if (sigma < -1e-12 || sigma > 1 + 1e-12) return std::nullopt;
    double v = std::clamp(sigma, 0.0, 1.0) * ny_;
    int j = std::clamp(static_cast<int>(std::floor(v)), 0, ny_ - 1);
    v = std::clamp(v - j, 0.0, 1.0);
    return std::make_pair(j * nx_ + i, std::array<double, 2>{u, v});
  }

private:
  DomainSpec spec_;
  int nx_, ny_;
  std::vector<double> xi_, s_, bottom_, top_, X_, Y_;
  std::vector<unsigned> flags_;
};

/// Builds a grid after checking the resolution rules: at least 4 cells per
/// axis, and for bumpy cubes at least 4 cells per eps in each axis.
inline std::shared_ptr<const MappedGrid> build_grid(const DomainSpec& spec, int nx, int ny) {
  if (nx < 4 || ny < 4)
    throw ValidationError("grid", fmt::format("resolution {}x{} below the 4-cells-per-axis minimum", nx, ny));
  if ((spec.kind == DomainKind::bumpy_cube || spec.kind == DomainKind::channel) && !spec.graph)
    throw ValidationError("grid", "bumpy domains need a boundary graph");
  switch (spec.kind) {
    case DomainKind::bumpy_cube: {
      if (!(spec.epsilon > 0.0 && spec.epsilon <= spec.r))
        throw ValidationError("grid", fmt::format("need 0 < eps <= r, got eps={:.6g}, r={:.6g}", spec.epsilon, spec.r));
      const double hx = 2.0 * spec.r / nx, hs = spec.r / ny;
      const double limit = spec.epsilon / 4.0 * (1.0 + 1e-12);
      if (hx > limit || hs > limit)
        throw ValidationError(
            "grid", fmt::format("under-resolved: rule requires >= 4 cells per eps in each axis "
                                "(eps={:.6g}, h=({:.6g}, {:.6g}), need h <= {:.6g})",
                                spec.epsilon, hx, hs, spec.epsilon / 4.0));
      break;
    }
    case DomainKind::channel:
      if (!(spec.x1 > spec.x0)) throw ValidationError("grid", "empty channel");
      break;
    case DomainKind::box:
      if (!(spec.x1 > spec.x0 && spec.y1 > spec.y0)) throw ValidationError("grid", "empty box");
      break;
  }
  auto g = std::make_shared<const MappedGrid>(spec, nx, ny);
  if (spec.kind == DomainKind::channel)
    for (int i = 0; i <= nx; ++i)
      if (!(g->bottom_height(i) < 0.0))
        throw ValidationError("grid", fmt::format("degenerate channel: psi >= 0 at y1={:.6g}", g->xi(i)));
  return g;
}

/// Nodal values of an N-component field; value of component c at node k is
/// values[k * N + c].
struct DiscreteField {
  std::shared_ptr<const MappedGrid> grid;
  int components = 1;
  Eigen::VectorXd values;

  DiscreteField() = default;
  DiscreteField(std::shared_ptr<const MappedGrid> g, int n)
      : grid(std::move(g)), components(n), values(Eigen::VectorXd::Zero(grid->num_nodes() * n)) {}
  DiscreteField(std::shared_ptr<const MappedGrid> g, int n, Eigen::VectorXd v)
      : grid(std::move(g)), components(n), values(std::move(v)) {
    if (values.size() != static_cast<Eigen::Index>(grid->num_nodes()) * n)
      throw ValidationError("grid", fmt::format("field length {} != nodes {} x components {}", values.size(),
                                                grid->num_nodes(), n));
  }

  double operator()(int node, int c = 0) const { return values[node * components + c]; }
  double& operator()(int node, int c = 0) { return values[node * components + c]; }

  /// Value of component c at a quadrature point.
  double value(const QuadPoint& q, int c = 0) const {
    double v = 0;
    for (int a = 0; a < 4; ++a) v += q.phi[a] * values[q.nodes[a] * components + c];
    return v;
  }

  std::array<double, 2> gradient(const QuadPoint& q, int c = 0) const {
    std::array<double, 2> g{0, 0};
    for (int a = 0; a < 4; ++a) {
      const double u = values[q.nodes[a] * components + c];
      g[0] += q.dphi[a][0] * u;
      g[1] += q.dphi[a][1] * u;
    }
    return g;
  }

  /// Value at an arbitrary physical point of the domain.
  double value_at(double x, double y, int c = 0) const {
    const auto loc = grid->locate(x, y);
    if (!loc) throw ValidationError("grid", fmt::format("point ({:.6g}, {:.6g}) outside the grid", x, y));
    const int i = loc->first % grid->nx(), j = loc->first / grid->nx();
    const auto [u, v] = loc->second;
    const int n[4] = {grid->node(i, j), grid->node(i + 1, j), grid->node(i, j + 1), grid->node(i + 1, j + 1)};
    const double w[4] = {(1 - u) * (1 - v), u * (1 - v), (1 - u) * v, u * v};
    double r = 0;
    for (int a = 0; a < 4; ++a) r += w[a] * values[n[a] * components + c];
    return r;
  }
};

/// Field with nodal values f(x, y, component).
inline DiscreteField interpolate(std::shared_ptr<const MappedGrid> grid, int n,
                                 const std::function<double(double, double, int)>& f) {
  DiscreteField u(grid, n);
  for (int k = 0; k < grid->num_nodes(); ++k)
    for (int c = 0; c < n; ++c) u(k, c) = f(grid->x(k), grid->y(k), c);
  return u;
}

inline void write_field_csv(std::ostream& os, const DiscreteField& u) {
  os << "x,y";
  for (int c = 0; c < u.components; ++c) os << ",u" << c;
  os << '\n';
  for (int k = 0; k < u.grid->num_nodes(); ++k) {
    os << fmt::format("{:.10g},{:.10g}", u.grid->x(k), u.grid->y(k));
    for (int c = 0; c < u.components; ++c) os << fmt::format(",{:.10g}", u(k, c));
    os << '\n';
  }
}

struct RegionIntegral {
  double value = 0.0;
  bool empty = false;  // subregion had zero area
};

/// Optional coefficient weighting x -> A(x / eps) for energy integrals.
struct EnergyWeight {
  const CoefficientField* A = nullptr;
  double epsilon = 1.0;
};

namespace detail {

inline void check_box(const MappedGrid& g, const RefBox& b) {
  const RefBox e = g.extent();
  const double tol = 1e-9 * std::max(e.xi1 - e.xi0, e.s1 - e.s0);
  if (b.xi0 < e.xi0 - tol || b.xi1 > e.xi1 + tol || b.s0 < e.s0 - tol || b.s1 > e.s1 + tol)
    throw ValidationError("grid", fmt::format("subregion [{:.6g},{:.6g}]x[{:.6g},{:.6g}] outside the domain "
                                              "[{:.6g},{:.6g}]x[{:.6g},{:.6g}]",
                                              b.xi0, b.xi1, b.s0, b.s1, e.xi0, e.xi1, e.s0, e.s1));
}

}  // namespace detail

/// Integral of |grad u|^2 (summed over components), or of A grad u . grad u
/// when a weight is given, over a reference subregion.
inline RegionIntegral integrate_energy(const DiscreteField& u, const RefBox& box,
                                       const EnergyWeight& weight = {}) {
  const MappedGrid& g = *u.grid;
  detail::check_box(g, box);
  if (box.xi1 <= box.xi0 || box.s1 <= box.s0) return {0.0, true};
  const int N = u.components;
  double total = 0.0;
  if (!weight.A) {
    g.for_each_quad_point(box, [&](const QuadPoint& q) {
      double e = 0;
      for (int c = 0; c < N; ++c) {
        const auto gr = u.gradient(q, c);
        e += gr[0] * gr[0] + gr[1] * gr[1];
      }
      total += q.weight * e;
    });
    return {total, false};
  }
  if (weight.A->components() != N || weight.A->dimension() != 2)
    throw ValidationError("grid", "coefficient shape does not match the field");
  Eigen::MatrixXd M(2 * N, 2 * N);
  Eigen::VectorXd grad(2 * N);
  g.for_each_quad_point(box, [&](const QuadPoint& q) {
    weight.A->evaluate_scaled(q.x, weight.epsilon, M);
    for (int c = 0; c < N; ++c) {
      const auto gr = u.gradient(q, c);
      grad[0 * N + c] = gr[0];
      grad[1 * N + c] = gr[1];
    }
    total += q.weight * grad.dot(M * grad);
  });
  return {total, false};
}

inline RegionIntegral integrate_energy(const DiscreteField& u, const EnergyWeight& weight = {}) {
  return integrate_energy(u, u.grid->extent(), weight);
}

/// Integral of |u|^2 over a reference subregion.
inline RegionIntegral integrate_l2(const DiscreteField& u, const RefBox& box) {
  const MappedGrid& g = *u.grid;
  detail::check_box(g, box);
  if (box.xi1 <= box.xi0 || box.s1 <= box.s0) return {0.0, true};
  double total = 0.0;
  g.for_each_quad_point(box, [&](const QuadPoint& q) {
    for (int c = 0; c < u.components; ++c) {
      const double v = u.value(q, c);
      total += q.weight * v * v;
    }
  });
  return {total, false};
}

struct UlocNorm {
  double value = 0.0;                   // max over windows
  std::vector<double> window_energies;  // left to right
  std::vector<double> window_starts;
  bool fallback = false;                // window wider than the domain
};

/// Supremum over grid-aligned horizontal windows [x0 + k w, x0 + (k+1) w) of
/// the full-column gradient energy. Windows start at integer multiples of w;
/// partial windows at the edges are dropped.
inline UlocNorm uloc_energy_norm(const DiscreteField& u, double window = 1.0,
                                 const EnergyWeight& weight = {}) {
  if (!(window > 0.0)) throw ValidationError("grid", "window size must be positive");
  const RefBox e = u.grid->extent();
  UlocNorm out;
  if (window > e.xi1 - e.xi0 + 1e-12) {
    out.fallback = true;
    out.value = integrate_energy(u, weight).value;
    out.window_energies = {out.value};
    out.window_starts = {e.xi0};
    return out;
  }
  const double tol = 1e-9 * window;
  for (long k = static_cast<long>(std::ceil((e.xi0 - tol) / window));; ++k) {
    const double a = k * window, b = a + window;
    if (b > e.xi1 + tol) break;
    const double en = integrate_energy(u, {a, std::min(b, e.xi1), e.s0, e.s1}, weight).value;
    out.window_energies.push_back(en);
    out.window_starts.push_back(a);
    out.value = std::max(out.value, en);
  }
  return out;
}

/// Piecewise-linear cutoff: 1 on |y| <= R - 1, 0 beyond R.
inline double window_cutoff(double y, double R) {
  const double a = std::abs(y);
  if (a <= R - 1.0) return 1.0;
  if (a >= R) return 0.0;
  return R - a;
}

/// Discrete H^{1/2} norm of a sampled trace: the samples are treated as one
/// period P = n h of a periodic function and
///   |v|^2 = P sum_k (1 + xi_k^2)^{1/2} |c_k|^2,  xi_k = 2 pi k / P,
/// with c_k the normalized discrete Fourier coefficients, k aliased to
/// (-n/2, n/2]. With `radius`, the trace is first multiplied by the cutoff
/// window_cutoff(y, R).
inline double h_half_norm(std::span<const double> y, std::span<const double> v,
                          std::optional<double> radius = std::nullopt) {
  const std::size_t n = y.size();
  if (v.size() != n) throw ValidationError("grid", "trace coordinates and values differ in length");
  if (n < 2 || (n & (n - 1)) != 0)
    throw ValidationError("grid", fmt::format("trace sample count {} is not a power of two", n));
  const double h = y[1] - y[0];
  if (!(h > 0.0)) throw ValidationError("grid", "trace coordinates must increase");
  for (std::size_t k = 1; k < n; ++k)
    if (std::abs((y[k] - y[k - 1]) - h) > 1e-9 * h)
      throw ValidationError("grid", fmt::format("non-uniform trace spacing at index {}", k));
  std::vector<double> data(v.begin(), v.end());
  if (radius) {
    if (!(*radius > 0.0)) throw ValidationError("grid", "window radius must be positive");
    for (std::size_t k = 0; k < n; ++k) data[k] *= window_cutoff(y[k], *radius);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, data);
  const double P = static_cast<double>(n) * h;
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = k <= n / 2 ? double(k) : double(k) - double(n);
    const double xi = two_pi * kk / P;
    const double c = std::abs(spec[k]) / static_cast<double>(n);
    acc += std::sqrt(1.0 + xi * xi) * c * c;
  }
  return std::sqrt(P * acc);
}

}  // namespace bumpy
