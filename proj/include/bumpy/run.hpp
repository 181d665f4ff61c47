#pragma once

// Executes a validated RunConfig and writes CSV artifacts plus manifest.txt.
// Exit codes: 0 success, 2 solver failure, 3 validation failure.

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "bumpy/config.hpp"

namespace bumpy {

inline constexpr int exit_ok = 0;
inline constexpr int exit_solver = 2;
inline constexpr int exit_validation = 3;

struct RunOptions {
  bool dry_run = false;
  bool plot_data = false;
  std::ostream* log = &std::cerr;
};

/// One CSV table. Rows are preformatted cells; `block_column` >= 0 inserts a
/// blank line in plot data whenever that column changes (gnuplot blocks).
struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int block_column = -1;
};

inline std::string num(double v) { return fmt::format("{:.10g}", v); }

inline void write_table(const std::filesystem::path& dir, const Table& t, bool plot_data) {
  {
    std::ofstream os(dir / (t.name + ".csv"));
    os << fmt::format("{}\n", fmt::join(t.header, ","));
    for (const auto& r : t.rows) os << fmt::format("{}\n", fmt::join(r, ","));
  }
  if (!plot_data) return;
  std::ofstream os(dir / (t.name + ".dat"));
  os << fmt::format("# {}\n", fmt::join(t.header, " "));
  std::string prev;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (t.block_column >= 0) {
      if (i > 0 && r[t.block_column] != prev) os << "\n\n";
      prev = r[t.block_column];
    }
    os << fmt::format("{}\n", fmt::join(r, " "));
  }
}

/// Exclusive lock on an output directory, released on destruction.
class DirectoryLock {
public:
  explicit DirectoryLock(const std::filesystem::path& dir) : path_(dir / "bumpy.lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw ValidationError("cli", fmt::format("output directory '{}' is locked by another run ({} exists)",
                                               dir.string(), path_.string()));
    const auto pid = fmt::format("{}\n", ::getpid());
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~DirectoryLock() {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
  std::filesystem::path path_;
  int fd_ = -1;
};

struct RunArtifacts {
  std::vector<Table> tables;
  std::vector<std::string> manifest;  // extra "key: value" lines
  std::vector<std::pair<std::string, DiscreteField>> fields;
};

namespace detail {

inline RunArtifacts run_cell(const RunConfig& c, std::shared_ptr<const CoefficientField> A) {
  RunArtifacts out;
  const auto chi = solve_cell(*A, c.cell_resolution);
  const auto Abar = homogenized_tensor(*A, chi);
  const int N = A->components();
  Table t{"cell", {"entry", "value"}, {}};
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          const auto name = N == 1 ? fmt::format("Abar{}{}", a + 1, b + 1)
                                   : fmt::format("Abar{}{}_{}{}", a + 1, b + 1, i + 1, j + 1);
          t.rows.push_back({name, num(Abar.matrix(a * N + i, b * N + j))});
        }
  t.rows.push_back({"ellipticity", num(Abar.ellipticity)});
  for (int g = 0; g < 2; ++g)
    for (int k = 0; k < N; ++k)
      t.rows.push_back({fmt::format("corrector_energy_{}_{}", g + 1, k + 1), num(corrector_energy(*A, chi, g, k))});
  t.rows.push_back({"vertical_gradient_bound", num(vertical_corrector_gradient_bound(chi))});
  out.tables.push_back(std::move(t));
  Table it{"cell_solver", {"column", "method", "iterations", "relative_residual"}, {}};
  for (std::size_t k = 0; k < chi.reports.size(); ++k)
    it.rows.push_back({std::to_string(k), chi.reports[k].method, std::to_string(chi.reports[k].iterations),
                       num(chi.reports[k].relative_residual)});
  out.tables.push_back(std::move(it));
  out.manifest.push_back(fmt::format("resolution: {}x{}", c.cell_resolution, c.cell_resolution));
  if (c.export_fields)
    for (int g = 0; g < 2; ++g)
      for (int k = 0; k < N; ++k) out.fields.emplace_back(fmt::format("chi_{}_{}", g + 1, k + 1), chi.column(g, k));
  return out;
}

inline RunArtifacts run_dtn(const RunConfig& c, std::shared_ptr<const CoefficientField> A) {
  RunArtifacts out;
  const auto op = assemble_dtn(A, c.dtn);
  std::vector<int> modes(c.dtn_modes);
  for (int j = 0; j < c.dtn_modes; ++j) modes[j] = j + 1;
  Table s{"dtn_symbol", {"mode", "xi", "form", "identity_symbol"}, {}};
  for (const auto& r : dtn_symbol(op, modes))
    s.rows.push_back({std::to_string(r.mode), num(r.xi), num(r.form_per_length), num(r.identity_symbol)});
  out.tables.push_back(std::move(s));
  const auto study = dtn_truncation_study(A, c.dtn, c.dtn_heights);
  Table t{"dtn_truncation", {"height", "operator_distance", "mode_form", "mode_distance"}, {}};
  for (const auto& r : study.rows)
    t.rows.push_back({num(r.height), num(r.operator_distance), num(r.mode_form), num(r.mode_distance)});
  out.tables.push_back(std::move(t));
  out.manifest.push_back(fmt::format("resolution: {} samples, {} cells per unit, H = {}", op.samples(),
                                     c.dtn.cells_per_unit, c.dtn.height));
  out.manifest.push_back(fmt::format("truncation_reference_height: {}", study.reference_height));
  if (study.insufficient) out.manifest.push_back("truncation_study: fewer than 3 heights, trend not assessed");
  return out;
}

inline RunArtifacts run_blayer(const RunConfig& c, std::shared_ptr<const CoefficientField> A,
                               std::shared_ptr<const LipschitzGraph> psi) {
  RunArtifacts out;
  BoundaryLayerProblem p = c.blayer;
  p.A = A;
  p.psi = psi;
  std::shared_ptr<const CellCorrectors> chi;
  if (c.blayer_data == "corrector")
    chi = std::make_shared<const CellCorrectors>(solve_cell(*A, c.blayer_cell_resolution));
  p.data = make_boundary_data(c.blayer_data, c.blayer_data_params, chi);
  const auto study = uloc_uniformity_study(p, c.truncations, c.cube);
  Table u{"blayer_uloc", {"n", "uloc", "max_rho", "lift_energy", "channel_energy"}, {}};
  Table e{"blayer_profile", {"n", "k", "E_k", "rho_k"}, {}, 0};
  for (std::size_t i = 0; i < study.rows.size(); ++i) {
    const auto& r = study.rows[i];
    u.rows.push_back({std::to_string(r.n), num(r.uloc), num(r.max_rho), num(r.lift_energy), num(r.channel_energy)});
    if (!study.profiles[i]) continue;
    const auto& pr = *study.profiles[i];
    for (std::size_t j = 0; j < pr.k.size(); ++j)
      e.rows.push_back({std::to_string(r.n), std::to_string(pr.k[j]), num(pr.E[j]),
                        pr.rho[j] ? num(*pr.rho[j]) : std::string("nan")});
  }
  out.tables.push_back(std::move(u));
  out.tables.push_back(std::move(e));
  out.manifest.push_back(fmt::format("resolution: {} cells per unit, {} vertical cells, DtN H = {}",
                                     p.cells_per_unit, p.vertical_cells, p.dtn_height));
  out.manifest.push_back(fmt::format("uloc_last_relative_change: {}", num(study.last_relative_change)));
  return out;
}

inline std::string cells_rule(int cpe) {
  return fmt::format("cells_per_eps_rule: >= 4 cells per eps, {} used, {}", cpe, cpe >= 4 ? "satisfied" : "violated");
}

inline RunArtifacts run_lipschitz(const RunConfig& c, std::shared_ptr<const CoefficientField> A,
                                  std::shared_ptr<const LipschitzGraph> psi) {
  RunArtifacts out;
  const auto rep = lipschitz_scan(A, psi, c.scan);
  Table t{"lipschitz", {"epsilon", "r", "M"}, {}, 0};
  Table s{"lipschitz_sup", {"epsilon", "sup_M", "nx", "ny"}, {}};
  for (std::size_t i = 0; i < rep.epsilons.size(); ++i) {
    for (std::size_t k = 0; k < rep.radii[i].size(); ++k)
      t.rows.push_back({num(rep.epsilons[i]), num(rep.radii[i][k]), num(rep.M[i][k])});
    s.rows.push_back({num(rep.epsilons[i]), num(rep.suprema[i]), std::to_string(rep.resolutions[i].first),
                      std::to_string(rep.resolutions[i].second)});
    out.manifest.push_back(fmt::format("resolution_eps_{}: {}x{}", num(rep.epsilons[i]), rep.resolutions[i].first,
                                       rep.resolutions[i].second));
  }
  out.tables.push_back(std::move(t));
  out.tables.push_back(std::move(s));
  out.manifest.push_back(cells_rule(c.scan.cells_per_epsilon));
  out.manifest.push_back(fmt::format("recipe: {}", to_string(c.scan.recipe)));
  return out;
}

inline RunArtifacts run_homog(const RunConfig& c, std::shared_ptr<const CoefficientField> A,
                              std::shared_ptr<const LipschitzGraph> psi) {
  RunArtifacts out;
  const auto rep =
      homogenization_check(A, psi, c.scan.epsilons, c.scan.cells_per_epsilon, c.scan_cell_resolution, c.scan.recipe);
  Table t{"homog", {"epsilon", "l2_error"}, {}};
  for (std::size_t i = 0; i < rep.epsilons.size(); ++i) t.rows.push_back({num(rep.epsilons[i]), num(rep.l2_errors[i])});
  out.tables.push_back(std::move(t));
  Table s{"homog_summary", {"key", "value"}, {}};
  s.rows.push_back({"fitted_rate", num(rep.fitted_rate)});
  s.rows.push_back({"monotone", rep.monotone ? "true" : "false"});
  for (int i = 0; i < rep.Abar.rows(); ++i)
    for (int j = 0; j < rep.Abar.cols(); ++j) s.rows.push_back({fmt::format("Abar_{}_{}", i, j), num(rep.Abar(i, j))});
  out.tables.push_back(std::move(s));
  out.manifest.push_back(cells_rule(c.scan.cells_per_epsilon));
  out.manifest.push_back(fmt::format("recipe: {}", to_string(c.scan.recipe)));
  return out;
}

inline RunArtifacts run_excess(const RunConfig& c, std::shared_ptr<const CoefficientField> A,
                               std::shared_ptr<const LipschitzGraph> psi) {
  RunArtifacts out;
  const auto rep = excess_decay(A, psi, c.excess);
  Table t{"excess", {"k", "r_k", "a_k", "excess"}, {}};
  for (std::size_t k = 0; k < rep.r.size(); ++k) {
    std::vector<std::string> a;
    for (int i = 0; i < rep.a[k].size(); ++i) a.push_back(num(rep.a[k][i]));
    t.rows.push_back({std::to_string(k), num(rep.r[k]), fmt::format("{}", fmt::join(a, " ")), num(rep.excess[k])});
  }
  out.tables.push_back(std::move(t));
  Table s{"excess_summary", {"key", "value"}, {}};
  s.rows.push_back({"slope", num(rep.slope)});
  s.rows.push_back({"mu_hat", num(rep.mu_hat)});
  s.rows.push_back({"mean_dxd_theta", num(rep.mean_dxd_theta)});
  s.rows.push_back({"envelope", num(rep.envelope)});
  s.rows.push_back({"within_envelope", rep.within_envelope ? "true" : "false"});
  out.tables.push_back(std::move(s));
  out.manifest.push_back(fmt::format("resolution: {}x{}", rep.resolution.first, rep.resolution.second));
  out.manifest.push_back(cells_rule(c.excess.cells_per_epsilon));
  out.manifest.push_back(fmt::format("recipe: {}", to_string(c.excess.recipe)));
  return out;
}

}  // namespace detail

/// Runs `c`; artifacts go to c.output, which must not be locked by another run.
inline int run(const RunConfig& c, const RunOptions& opt = {}) {
  auto& log = *opt.log;
  if (opt.dry_run) {
    log << c.canonical();
    return exit_ok;
  }
  namespace fs = std::filesystem;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto A = std::make_shared<const CoefficientField>(
        make_builtin_coefficients(c.coefficient_family, 2, c.components, c.coefficient_params));
    const auto psi = std::make_shared<const LipschitzGraph>(make_builtin_graph(c.graph_family, c.graph_params));
    const auto coeff_check = validate_coefficients(*A, 10000, c.seed);
    const auto graph_check = validate_graph(*psi, 10000, c.seed);

    fs::create_directories(c.output);
    DirectoryLock lock(c.output);
    RunArtifacts art;
    switch (c.command) {
      case Command::cell: art = detail::run_cell(c, A); break;
      case Command::dtn: art = detail::run_dtn(c, A); break;
      case Command::blayer: art = detail::run_blayer(c, A, psi); break;
      case Command::lipschitz: art = detail::run_lipschitz(c, A, psi); break;
      case Command::homog: art = detail::run_homog(c, A, psi); break;
      case Command::excess: art = detail::run_excess(c, A, psi); break;
    }
    for (const auto& t : art.tables) write_table(c.output, t, opt.plot_data);
    for (const auto& [name, field] : art.fields) {
      std::ofstream os(fs::path(c.output) / (name + ".csv"));
      write_field_csv(os, field);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream m(fs::path(c.output) / "manifest.txt");
    m << fmt::format("command: {}\n", to_string(c.command));
    m << fmt::format("config_hash: fnv1a64:{:016x}\n", fnv1a(c.canonical()));
    m << fmt::format("solver_tolerance: {:g}\n", SolveOptions{}.tolerance);
    if (c.command != Command::lipschitz && c.command != Command::homog && c.command != Command::excess)
      m << "cells_per_eps_rule: not applicable (no eps-scaled domain)\n";
    for (const auto& line : art.manifest) m << line << '\n';
    m << fmt::format("coefficient_ellipticity_check: min ratio {}, max ratio {}\n", num(coeff_check.min_ratio),
                     num(coeff_check.max_ratio));
    m << fmt::format("graph_check: range [{}, {}], max difference quotient {}\n", num(graph_check.min_value),
                     num(graph_check.max_value), num(graph_check.max_difference_quotient));
    m << fmt::format("artifacts:");
    for (const auto& t : art.tables) m << ' ' << t.name << ".csv";
    for (const auto& f : art.fields) m << ' ' << f.first << ".csv";
    m << '\n';
    m << fmt::format("threads: {}\n", thread_count());
    m << fmt::format("wall_time_s: {:.3f}\n", wall);
    m << "config:\n" << c.canonical();
    log << fmt::format("{}: wrote {} tables to {} in {:.2f} s\n", to_string(c.command), art.tables.size(), c.output,
                       wall);
    return exit_ok;
  } catch (const SolverError& e) {
    log << e.what() << '\n';
    return exit_solver;
  } catch (const ValidationError& e) {
    log << e.what() << '\n';
    return exit_validation;
  } catch (const std::filesystem::filesystem_error& e) {
    log << "[cli] " << e.what() << '\n';
    return exit_validation;
  } catch (const std::exception& e) {
    log << "[cli] " << e.what() << '\n';
    return exit_solver;
  }
}

}  // namespace bumpy
