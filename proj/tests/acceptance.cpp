// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// The lines also go to acceptance_report.txt in the working directory.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "bumpy/run.hpp"

using namespace bumpy;
namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::shared_ptr<const CoefficientField> field(const std::string& family, std::vector<double> params) {
  return std::make_shared<const CoefficientField>(make_builtin_coefficients(family, 2, 1, params));
}

std::shared_ptr<const LipschitzGraph> graph(const std::string& family, std::vector<double> params) {
  return std::make_shared<const LipschitzGraph>(make_builtin_graph(family, params));
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Harmonic and arithmetic means of 2 + sin(2 pi t), midpoint rule.
std::pair<double, double> laminate_means() {
  const int n = 1 << 16;
  double inv = 0, avg = 0;
  for (int k = 0; k < n; ++k) {
    const double a = 2 + std::sin(2 * pi * (k + 0.5) / n);
    inv += 1 / a;
    avg += a;
  }
  return {n / inv, avg / n};
}

Outcome cell_oracle() {
  const auto A = make_builtin_coefficients("laminate", 2, 1, {2, 1});
  const auto [h, a] = laminate_means();
  std::vector<double> err;
  for (int n : {32, 64, 128, 256}) {
    const auto Ab = homogenized_tensor(A, solve_cell(A, n)).matrix;
    err.push_back(std::max(std::abs(Ab(0, 0) - h) / h, std::abs(Ab(1, 1) - a) / a));
  }
  double min_order = 1e300;
  for (std::size_t k = 0; k + 1 < err.size(); ++k) min_order = std::min(min_order, std::log2(err[k] / err[k + 1]));
  const auto C = make_builtin_coefficients("constant", 2, 1, {1.5});
  const auto chi = solve_cell(C, 32);
  double chi_max = 0;
  for (const auto& col : chi.columns) chi_max = std::max(chi_max, col.values.cwiseAbs().maxCoeff());
  const auto Cb = homogenized_tensor(C, chi).matrix;
  const double cdiff = (Cb - 1.5 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff();
  const bool pass = err.back() <= 1e-3 && min_order >= 1.8 && chi_max <= 1e-10 && cdiff <= 1e-10;
  return {pass, fmt::format("laminate rel err {:.3e} at 256, min order {:.3f}; constant |chi| {:.1e}, |Abar-A| {:.1e}",
                            err.back(), min_order, chi_max, cdiff)};
}

Outcome fem_manufactured() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto A = field("constant", {1.0});
  std::vector<double> l2, h1;
  for (int n : {16, 32, 64}) {
    EllipticProblem p;
    p.grid = build_grid(DomainSpec::rectangle(0, 1, 0, 1), n, n);
    p.A = A;
    p.source = [](const QuadPoint& q, Eigen::Ref<Eigen::VectorXd> f) {
      f[0] = 2 * pi * pi * std::sin(pi * q.x[0]) * std::sin(pi * q.x[1]);
    };
    const auto sol = solve(p);
    double e0 = 0, e1 = 0;
    p.grid->for_each_quad_point(
        [&](const QuadPoint& q) {
          const double x = q.x[0], y = q.x[1];
          const double e = sol.u.value(q) - std::sin(pi * x) * std::sin(pi * y);
          const auto g = sol.u.gradient(q);
          const double gx = g[0] - pi * std::cos(pi * x) * std::sin(pi * y);
          const double gy = g[1] - pi * std::sin(pi * x) * std::cos(pi * y);
          e0 += q.weight * e * e;
          e1 += q.weight * (gx * gx + gy * gy);
        },
        3);
    l2.push_back(std::sqrt(e0));
    h1.push_back(std::sqrt(e1));
  }
  bool pass = true;
  std::string orders;
  for (int k = 0; k < 2; ++k) {
    const double o0 = std::log2(l2[k] / l2[k + 1]), o1 = std::log2(h1[k] / h1[k + 1]);
    pass = pass && std::abs(o0 - 2.0) <= 0.2 && std::abs(o1 - 1.0) <= 0.2;
    orders += fmt::format(" L2 {:.3f} H1 {:.3f};", o0, o1);
  }
  const double t = seconds_since(t0);
  pass = pass && t <= 10.0;
  return {pass, fmt::format("orders{} {:.2f} s", orders, t)};
}

Outcome dtn_spectral() {
  const auto A = field("constant", {1.0});
  DtNConfig cfg;
  cfg.half_width = 1.0;
  cfg.height = 4.0;
  cfg.cells_per_unit = 128;  // 256 interface samples
  const auto op = assemble_dtn(A, cfg);
  double worst = 0;
  for (const auto& r : dtn_symbol(op, {1, 2, 3, 4, 5, 6, 7, 8}))
    worst = std::max(worst, std::abs(r.form_per_length / r.identity_symbol - 1.0));
  // Truncation: the mode-1 distance to H = 4 must track pi |coth(pi H) - coth(4 pi)|.
  DtNConfig tc = cfg;
  tc.cells_per_unit = 32;
  const auto study = dtn_truncation_study(A, tc, {2.0, 2.25, 2.5, 2.75, 4.0});
  auto coth = [](double t) { return 1.0 / std::tanh(t); };
  double worst_ratio = 0;
  bool decreasing = true;
  for (std::size_t k = 0; k < study.rows.size(); ++k) {
    const auto& r = study.rows[k];
    const double exact = pi * std::abs(coth(pi * r.height) - coth(pi * 4.0));
    worst_ratio = std::max(worst_ratio, std::abs(r.mode_distance / exact - 1.0));
    if (k > 0 && !(r.mode_distance < study.rows[k - 1].mode_distance)) decreasing = false;
  }
  const bool pass = op.samples() == 256 && worst <= 0.02 && worst_ratio <= 0.1 && decreasing;
  return {pass, fmt::format("{} samples, worst symbol deviation {:.3e} (modes 1..8); truncation vs coth worst rel {:.3e}, "
                            "decreasing {}",
                            op.samples(), worst, worst_ratio, decreasing)};
}

Outcome dtn_negativity() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(20260101);
  double worst = -1e300;
  int count = 0;
  for (const auto& A : {field("constant", {1.0}), field("trigonometric", {0.5, 0.0}), field("trigonometric", {0.5, 0.8})}) {
    DtNConfig cfg;
    cfg.half_width = 2.0;
    cfg.height = 2.0;
    cfg.cells_per_unit = 16;
    const auto op = assemble_dtn(A, cfg);
    for (int t = 0; t < 100; ++t) {
      Eigen::VectorXd v(op.samples() * op.components());
      for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = 2 * uniform01(rng) - 1;
      worst = std::max(worst, op.form(v, v) / v.squaredNorm());
      ++count;
    }
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-10 && t <= 60.0,
          fmt::format("{} traces on 3 fields (identity, oscillating, skew-perturbed), max form/|v|^2 = {:.3e}, {:.1f} s",
                      count, worst, t)};
}

Outcome blayer_uniformity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto A = field("trigonometric", {0.5, 0.0});
  BoundaryLayerProblem p;
  p.A = A;
  p.psi = graph("sawtooth", {0.4});
  p.data = make_boundary_data("corrector", {}, std::make_shared<const CellCorrectors>(solve_cell(*A, 64)));
  p.cells_per_unit = 16;
  p.vertical_cells = 16;
  const auto study = uloc_uniformity_study(p, {8, 16, 32}, 4);
  const auto& rows = study.rows;
  const double r16 = rows[1].max_rho, r32 = rows[2].max_rho;
  const bool rho_ok = r16 > 0 && r32 > 0 && std::max(r16, r32) <= 2.0 * std::min(r16, r32);
  const double t = seconds_since(t0);
  const bool pass = study.last_relative_change <= 0.10 && rho_ok && t <= 600.0;
  return {pass, fmt::format("uloc n=8/16/32: {:.6g} {:.6g} {:.6g}, rel change {:.2e}; max rho {:.4f} {:.4f} {:.4f}; {:.1f} s",
                            rows[0].uloc, rows[1].uloc, rows[2].uloc, study.last_relative_change, rows[0].max_rho,
                            r16, r32, t)};
}

Outcome improved_regularity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto A = field("trigonometric", {0.5, 0.0});
  const auto psi = graph("sawtooth", {0.4});
  ScanConfig cfg;  // eps 1/8, 1/16, 1/32; 8 radii in [eps, 1/2]; 8 cells per eps
  const auto ref = lipschitz_scan(A, psi, cfg);
  auto spread = [](const LipschitzScanReport& r) {
    const auto [lo, hi] = std::minmax_element(r.suprema.begin(), r.suprema.end());
    return *hi / *lo;
  };
  ScanConfig fine = cfg;
  fine.cells_per_epsilon = 16;
  const auto ctl = lipschitz_scan(A, psi, fine);
  ScanConfig flat = cfg;
  const auto one = lipschitz_scan(field("constant", {1.0}), graph("flat", {-0.5}), flat);
  double flat_dev = 0;
  for (const auto& row : one.M)
    for (double m : row) flat_dev = std::max(flat_dev, std::abs(m - 1.0));
  const double t = seconds_since(t0);
  const double s = spread(ref);
  const bool pass = s <= 2.0 && flat_dev <= 1e-8 && t <= 600.0;
  return {pass, fmt::format("sup_r M = {:.5f} {:.5f} {:.5f}, spread {:.4f} (16 cells per eps control {:.4f}); "
                            "flat control max |M-1| {:.1e}; {:.1f} s",
                            ref.suprema[0], ref.suprema[1], ref.suprema[2], s, spread(ctl), flat_dev, t)};
}

Outcome excess() {
  const auto A = field("trigonometric", {0.5, 0.0});
  const auto psi = graph("sawtooth", {0.4});
  ExcessConfig cfg;
  cfg.epsilon = 1.0 / 32;
  cfg.theta = 1.0 / 8;
  cfg.depth = 2;
  cfg.cells_per_epsilon = 16;
  const auto ref = excess_decay(A, psi, cfg);
  ExcessConfig fine = cfg;
  fine.cells_per_epsilon = 32;
  const auto ctl = excess_decay(A, psi, fine);
  ExcessConfig flat = cfg;
  const auto zero = excess_decay(field("constant", {1.0}), graph("flat", {-0.5}), flat);
  double flat_max = 0;
  for (double e : zero.excess) flat_max = std::max(flat_max, e);
  const bool pass = ref.slope >= 2.0 && ctl.slope >= 2.0 && flat_max <= 1e-10;
  return {pass, fmt::format("slope {:.4f} (mu_hat {:.4f}) at 16 cells per eps, 2x control slope {:.4f}; excess {:.3e} "
                            "{:.3e} {:.3e}; |a_k| within envelope {}; flat control max excess {:.1e}",
                            ref.slope, ref.mu_hat, ctl.slope, ref.excess[0], ref.excess[1], ref.excess[2],
                            ref.within_envelope, flat_max)};
}

Outcome windowed_half_norm() {
  const int n = 8192;
  std::vector<double> y(n), v(n, 1.0);
  for (int k = 0; k < n; ++k) y[k] = -64.0 + 128.0 * k / n;
  std::vector<double> lx, ly;
  for (double R : {2.0, 4.0, 8.0, 16.0}) {
    lx.push_back(std::log(R));
    ly.push_back(std::log(h_half_norm(y, v, R)));
  }
  const double s = fit_slope(lx, ly);
  return {std::abs(s - 0.5) <= 0.15, fmt::format("fitted exponent {:.4f} over R = 2, 4, 8, 16", s)};
}

std::map<std::string, std::string> csv_snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    out[e.path().filename().string()] = ss.str();
  }
  return out;
}

Outcome determinism() {
  const std::vector<std::string> configs = {
      "[run]\ncommand = cell\n[coefficients]\nfamily = laminate\nparams = 2 1\n[cell]\nresolution = 64\n",
      "[run]\ncommand = dtn\n[coefficients]\nfamily = trigonometric\nparams = 0.5 0.8\n[dtn]\ncells_per_unit = 16\n",
      "[run]\ncommand = blayer\n[blayer]\ntruncations = 8 12 16\ncell_resolution = 32\n",
      "[run]\ncommand = lipschitz\n[scan]\nepsilons = 0.125 0.0625\n",
      "[run]\ncommand = homog\n[coefficients]\nfamily = laminate\nparams = 2 1\n[scan]\nepsilons = 0.25 0.125 0.0625\n",
      "[run]\ncommand = excess\n[excess]\nepsilon = 0.0625\ncells_per_epsilon = 8\ndepth = 1\n",
  };
  const auto root = fs::temp_directory_path() / "bumpy_acceptance_determinism";
  fs::remove_all(root);
  int files = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    std::map<std::string, std::string> snaps[2];
    for (int rep = 0; rep < 2; ++rep) {
      // Second pass with a different worker count.
      setenv("BUMPY_THREADS", rep == 0 ? "1" : "3", 1);
      auto parsed = parse_config_string(configs[i]);
      if (!parsed.config) return {false, fmt::format("config {} invalid: {}", i, parsed.errors.front())};
      parsed.config->output = (root / fmt::format("run{}_{}", i, rep)).string();
      std::ostringstream log;
      RunOptions opt;
      opt.log = &log;
      if (run(*parsed.config, opt) != exit_ok) return {false, fmt::format("config {} failed: {}", i, log.str())};
      snaps[rep] = csv_snapshot(parsed.config->output);
    }
    unsetenv("BUMPY_THREADS");
    if (snaps[0].empty() || snaps[0] != snaps[1])
      return {false, fmt::format("{} artifacts differ between reruns", to_string(parse_config_string(configs[i]).config->command))};
    files += static_cast<int>(snaps[0].size());
  }
  fs::remove_all(root);
  return {true, fmt::format("{} CSV files from 6 commands byte-identical across reruns (1 and 3 threads)", files)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  const std::vector<Criterion> criteria = {
      {1, "cell/homogenization oracle", cell_oracle},
      {2, "FEM manufactured solution", fem_manufactured},
      {3, "DtN spectral oracle", dtn_spectral},
      {4, "DtN negativity", dtn_negativity},
      {5, "boundary-layer uniformity", blayer_uniformity},
      {6, "improved regularity scan", improved_regularity},
      {7, "excess decay", excess},
      {8, "windowed H^1/2 scaling", windowed_half_norm},
      {9, "determinism", determinism},
  };
  int failures = 0;
  std::ofstream report("acceptance_report.txt");
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failures;
    const auto line = fmt::format("criterion {}: {} - {} [{}] ({:.1f} s)\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                                  o.detail, seconds_since(t0));
    std::cout << line << std::flush;
    report << line << std::flush;
  }
  const auto summary = fmt::format("{} of {} criteria passed\n", criteria.size() - failures, criteria.size());
  std::cout << summary;
  report << summary;
  return failures == 0 ? 0 : 1;
}
