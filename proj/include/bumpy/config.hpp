#pragma once

// INI run configuration. Sections and keys (defaults in parentheses):
//
// [run]          command = cell|dtn|blayer|lipschitz|homog|excess, output (out), seed (1)
// [coefficients] family (trigonometric), params (0.5 0 with the default family), components (1)
// [graph]        family (sawtooth), params (0.4 with the default family)
// [cell]         resolution (64), export_fields (false)
// [dtn]          half_width (1), height (4), cells_per_unit (16), top (dirichlet), modes (8),
//                heights (2 3 4)
// [blayer]       truncations (8 16 32), cells_per_unit (16), vertical_cells (16), cube (4),
//                closure (periodic), data (corrector), data_params, dtn_height (4), dtn_top (dirichlet),
//                cell_resolution (64)
// [scan]         epsilons (0.125 0.0625 0.03125), radii, radius_points (8), cells_per_epsilon (8),
//                recipe (vertical for lipschitz, tilted for homog), cell_resolution (64)
// [excess]       epsilon (0.03125), theta (0.125), depth (2), epsilon0 (2), cells_per_epsilon (16),
//                cell_resolution (64), layer_cells_per_unit (16), layer_vertical_cells (16),
//                layer_height (4), recipe (vertical)
//
// Lists are separated by spaces or commas.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bumpy/blayer.hpp"
#include "bumpy/coeff.hpp"
#include "bumpy/dtn.hpp"
#include "bumpy/harness.hpp"

namespace bumpy {

enum class Command { cell, dtn, blayer, lipschitz, homog, excess };

inline std::optional<Command> command_from(std::string_view s) {
  if (s == "cell") return Command::cell;
  if (s == "dtn") return Command::dtn;
  if (s == "blayer") return Command::blayer;
  if (s == "lipschitz") return Command::lipschitz;
  if (s == "homog") return Command::homog;
  if (s == "excess") return Command::excess;
  return std::nullopt;
}

inline std::string_view to_string(Command c) {
  switch (c) {
    case Command::cell: return "cell";
    case Command::dtn: return "dtn";
    case Command::blayer: return "blayer";
    case Command::lipschitz: return "lipschitz";
    case Command::homog: return "homog";
    case Command::excess: return "excess";
  }
  return "?";
}

struct RunConfig {
  Command command = Command::cell;
  std::string output = "out";
  std::uint64_t seed = 1;

  std::string coefficient_family = "trigonometric";
  std::vector<double> coefficient_params{0.5, 0.0};
  int components = 1;
  std::string graph_family = "sawtooth";
  std::vector<double> graph_params{0.4};

  int cell_resolution = 64;
  bool export_fields = false;

  DtNConfig dtn;
  int dtn_modes = 8;
  std::vector<double> dtn_heights{2, 3, 4};

  BoundaryLayerProblem blayer;  // A, psi and data are filled in by run()
  std::vector<int> truncations{8, 16, 32};
  int cube = 4;
  std::string blayer_data = "corrector";
  std::vector<double> blayer_data_params;
  int blayer_cell_resolution = 64;

  ScanConfig scan;
  int scan_cell_resolution = 64;
  bool scan_recipe_set = false;

  ExcessConfig excess{.cells_per_epsilon = 16};

  /// Canonical text of every setting; identical configs give identical text.
  std::string canonical() const;
};

struct ConfigResult {
  std::optional<RunConfig> config;
  std::vector<std::string> errors;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',' || c == ' ' || c == '\t') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline std::optional<double> to_double(const std::string& s) {
  std::size_t pos = 0;
  try {
    const double v = std::stod(s, &pos);
    if (pos == s.size() && std::isfinite(v)) return v;
  } catch (...) {
  }
  return std::nullopt;
}

inline std::optional<long long> to_integer(const std::string& s) {
  std::size_t pos = 0;
  try {
    const long long v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (...) {
  }
  return std::nullopt;
}

/// Typed reader over one parsed tree; every problem is appended to `errors`.
class Reader {
public:
  Reader(const boost::property_tree::ptree& tree, std::vector<std::string>& errors) : tree_(tree), errors_(errors) {}

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    known_[section].insert(key);
    const auto sec = tree_.get_child_optional(section);
    if (!sec) return std::nullopt;
    const auto v = sec->get_optional<std::string>(boost::property_tree::ptree::path_type(key, '\0'));
    if (!v) return std::nullopt;
    std::string s = *v;
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    return s;
  }

  void text(const std::string& sec, const std::string& key, std::string& out) {
    if (auto v = raw(sec, key)) out = *v;
  }

  void number(const std::string& sec, const std::string& key, double& out, double lo, double hi) {
    const auto v = raw(sec, key);
    if (!v) return;
    const auto d = to_double(*v);
    if (!d) return error(sec, key, fmt::format("expected a number, got '{}'", *v));
    if (*d < lo || *d > hi) return error(sec, key, fmt::format("{} outside [{}, {}]", *v, lo, hi));
    out = *d;
  }

  template <class Int>
  void integer(const std::string& sec, const std::string& key, Int& out, long long lo, long long hi) {
    const auto v = raw(sec, key);
    if (!v) return;
    const auto d = to_integer(*v);
    if (!d) return error(sec, key, fmt::format("expected an integer, got '{}'", *v));
    if (*d < lo || *d > hi) return error(sec, key, fmt::format("{} outside [{}, {}]", *v, lo, hi));
    out = static_cast<Int>(*d);
  }

  void boolean(const std::string& sec, const std::string& key, bool& out) {
    const auto v = raw(sec, key);
    if (!v) return;
    if (*v == "true" || *v == "1") out = true;
    else if (*v == "false" || *v == "0") out = false;
    else error(sec, key, fmt::format("expected true or false, got '{}'", *v));
  }

  bool numbers(const std::string& sec, const std::string& key, std::vector<double>& out) {
    const auto v = raw(sec, key);
    if (!v) return false;
    std::vector<double> vals;
    for (const auto& t : split_list(*v)) {
      const auto d = to_double(t);
      if (!d) {
        error(sec, key, fmt::format("expected a list of numbers, got '{}'", t));
        return false;
      }
      vals.push_back(*d);
    }
    out = std::move(vals);
    return true;
  }

  void integers(const std::string& sec, const std::string& key, std::vector<int>& out, int lo) {
    const auto v = raw(sec, key);
    if (!v) return;
    std::vector<int> vals;
    for (const auto& t : split_list(*v)) {
      const auto d = to_integer(t);
      if (!d) return error(sec, key, fmt::format("expected a list of integers, got '{}'", t));
      if (*d < lo) return error(sec, key, fmt::format("{} below the minimum {}", t, lo));
      vals.push_back(static_cast<int>(*d));
    }
    out = std::move(vals);
  }

  void error(const std::string& sec, const std::string& key, const std::string& what) {
    errors_.push_back(fmt::format("[{}] {}: {}", sec, key, what));
  }

  /// Names every section or key that no reader asked for.
  void report_unknown() {
    for (const auto& [sec, child] : tree_) {
      const auto it = known_.find(sec);
      if (it == known_.end()) {
        errors_.push_back(fmt::format("unknown section [{}]", sec));
        continue;
      }
      for (const auto& kv : child)
        if (!it->second.count(kv.first)) errors_.push_back(fmt::format("[{}] unknown key '{}'", sec, kv.first));
    }
  }

private:
  const boost::property_tree::ptree& tree_;
  std::vector<std::string>& errors_;
  std::map<std::string, std::set<std::string>> known_;
};

}  // namespace detail

/// `forced` is the command named on the command line; it fills in a missing
/// [run] command and must agree with a present one.
inline ConfigResult parse_config_stream(std::istream& in, std::optional<Command> forced = std::nullopt) {
  ConfigResult res;
  auto& errors = res.errors;
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    errors.push_back(fmt::format("line {}: {}", e.line(), e.message()));
    return res;
  }
  detail::Reader rd(tree, errors);
  RunConfig c;

  std::string cmd;
  rd.text("run", "command", cmd);
  if (cmd.empty() && forced) c.command = *forced;
  else if (cmd.empty()) errors.push_back("[run] command: missing (cell, dtn, blayer, lipschitz, homog, excess)");
  else if (auto k = command_from(cmd)) {
    c.command = *k;
    if (forced && *forced != *k)
      rd.error("run", "command", fmt::format("'{}' conflicts with the '{}' subcommand", cmd, to_string(*forced)));
  } else {
    rd.error("run", "command", fmt::format("unknown command '{}'", cmd));
  }
  rd.text("run", "output", c.output);
  if (c.output.empty()) rd.error("run", "output", "empty output directory");
  rd.integer("run", "seed", c.seed, 0, std::numeric_limits<long long>::max());

  // Default params belong to the default families only.
  if (rd.raw("coefficients", "family")) c.coefficient_params.clear();
  if (rd.raw("graph", "family")) c.graph_params.clear();
  rd.text("coefficients", "family", c.coefficient_family);
  rd.numbers("coefficients", "params", c.coefficient_params);
  rd.integer("coefficients", "components", c.components, 1, 3);
  rd.text("graph", "family", c.graph_family);
  rd.numbers("graph", "params", c.graph_params);

  rd.integer("cell", "resolution", c.cell_resolution, 8, 4096);
  rd.boolean("cell", "export_fields", c.export_fields);

  rd.number("dtn", "half_width", c.dtn.half_width, 0.5, 1e4);
  rd.number("dtn", "height", c.dtn.height, 2.0, 1e4);
  rd.integer("dtn", "cells_per_unit", c.dtn.cells_per_unit, 4, 4096);
  std::string top;
  rd.text("dtn", "top", top);
  if (top == "neumann") c.dtn.top = TopClosure::neumann;
  else if (!top.empty() && top != "dirichlet") rd.error("dtn", "top", fmt::format("expected dirichlet or neumann, got '{}'", top));
  rd.integer("dtn", "modes", c.dtn_modes, 1, 1024);
  if (rd.numbers("dtn", "heights", c.dtn_heights)) {
    for (double h : c.dtn_heights)
      if (h < 2.0) rd.error("dtn", "heights", fmt::format("height {} below the minimum 2", h));
    if (c.dtn_heights.empty()) rd.error("dtn", "heights", "empty list");
  }

  rd.integers("blayer", "truncations", c.truncations, 1);
  rd.integer("blayer", "cells_per_unit", c.blayer.cells_per_unit, 4, 4096);
  rd.integer("blayer", "vertical_cells", c.blayer.vertical_cells, 4, 4096);
  rd.integer("blayer", "cube", c.cube, 3, 1 << 20);
  std::string closure;
  rd.text("blayer", "closure", closure);
  if (closure == "dirichlet") c.blayer.closure = LateralClosure::dirichlet;
  else if (!closure.empty() && closure != "periodic")
    rd.error("blayer", "closure", fmt::format("expected periodic or dirichlet, got '{}'", closure));
  rd.text("blayer", "data", c.blayer_data);
  if (c.blayer_data != "zero" && c.blayer_data != "constant" && c.blayer_data != "cosine" && c.blayer_data != "corrector")
    rd.error("blayer", "data", fmt::format("unknown recipe '{}'", c.blayer_data));
  rd.numbers("blayer", "data_params", c.blayer_data_params);
  rd.number("blayer", "dtn_height", c.blayer.dtn_height, 2.0, 1e4);
  std::string btop;
  rd.text("blayer", "dtn_top", btop);
  if (btop == "neumann") c.blayer.dtn_top = TopClosure::neumann;
  else if (!btop.empty() && btop != "dirichlet")
    rd.error("blayer", "dtn_top", fmt::format("expected dirichlet or neumann, got '{}'", btop));
  rd.integer("blayer", "cell_resolution", c.blayer_cell_resolution, 8, 4096);
  if (c.command == Command::blayer) {
    if (c.truncations.size() < 3) rd.error("blayer", "truncations", "need at least 3 truncations");
    for (int n : c.truncations)
      if (n - c.cube < (c.cube + 1) / 2 + 2)
        rd.error("blayer", "truncations",
                 fmt::format("n = {} too narrow for the energy profile with cube = {}", n, c.cube));
  }

  rd.numbers("scan", "epsilons", c.scan.epsilons);
  rd.numbers("scan", "radii", c.scan.radii);
  rd.integer("scan", "radius_points", c.scan.radius_points, 1, 1000);
  rd.integer("scan", "cells_per_epsilon", c.scan.cells_per_epsilon, 1, 1024);
  rd.integer("scan", "cell_resolution", c.scan_cell_resolution, 8, 4096);
  std::string recipe;
  rd.text("scan", "recipe", recipe);
  if (!recipe.empty()) {
    if (auto r = data_recipe_from(recipe)) {
      c.scan.recipe = *r;
      c.scan_recipe_set = true;
    } else {
      rd.error("scan", "recipe", fmt::format("expected vertical or tilted, got '{}'", recipe));
    }
  }
  if (!c.scan_recipe_set && c.command == Command::homog) c.scan.recipe = DataRecipe::tilted;
  if (c.command == Command::lipschitz || c.command == Command::homog) {
    if (c.scan.epsilons.empty()) rd.error("scan", "epsilons", "empty list");
    if (c.command == Command::homog && c.scan.epsilons.size() < 3)
      rd.error("scan", "epsilons", "homogenization check needs at least 3 values of eps");
    if (c.scan.cells_per_epsilon < 4)
      rd.error("scan", "cells_per_epsilon", fmt::format("{} violates the >= 4 cells per eps rule", c.scan.cells_per_epsilon));
    for (double e : c.scan.epsilons) {
      if (!(e > 0.0 && e <= 0.5)) {
        rd.error("scan", "epsilons", fmt::format("eps = {} outside (0, 1/2]", e));
        continue;
      }
      if (std::abs(1.0 / e - std::round(1.0 / e)) > 1e-9)
        rd.error("scan", "epsilons", fmt::format("1/eps must be an integer, got eps = {}", e));
      for (double r : c.scan.radii)
        if (r < e) rd.error("scan", "radii", fmt::format("r = {} < eps = {}: the estimate holds only for r >= eps", r, e));
    }
    for (double r : c.scan.radii)
      if (r > 1.0) rd.error("scan", "radii", fmt::format("r = {} exceeds the domain size 1", r));
  }

  auto& ex = c.excess;
  rd.number("excess", "epsilon", ex.epsilon, 1e-6, 0.5);
  rd.number("excess", "theta", ex.theta, 0.0, 1.0);
  rd.integer("excess", "depth", ex.depth, 1, 64);
  rd.number("excess", "epsilon0", ex.epsilon0, 1e-9, 1e9);
  rd.integer("excess", "cells_per_epsilon", ex.cells_per_epsilon, 1, 1024);
  rd.integer("excess", "cell_resolution", ex.cell_resolution, 8, 4096);
  rd.integer("excess", "layer_cells_per_unit", ex.layer_cells_per_unit, 4, 4096);
  rd.integer("excess", "layer_vertical_cells", ex.layer_vertical_cells, 4, 4096);
  rd.number("excess", "layer_height", ex.layer_height, 2.0, 1e4);
  std::string erecipe;
  rd.text("excess", "recipe", erecipe);
  if (!erecipe.empty()) {
    if (auto r = data_recipe_from(erecipe)) ex.recipe = *r;
    else rd.error("excess", "recipe", fmt::format("expected vertical or tilted, got '{}'", erecipe));
  }
  if (c.command == Command::excess) {
    if (!(ex.theta > 0.0 && ex.theta <= 0.125)) rd.error("excess", "theta", fmt::format("{} outside (0, 1/8]", ex.theta));
    if (ex.cells_per_epsilon < 4)
      rd.error("excess", "cells_per_epsilon", fmt::format("{} violates the >= 4 cells per eps rule", ex.cells_per_epsilon));
    const double thK = std::pow(ex.theta, ex.depth);
    if (thK < ex.epsilon / ex.epsilon0 * (1 - 1e-12))
      rd.error("excess", "depth", fmt::format("theta^K = {:.6g} below eps/eps0 = {:.6g}", thK, ex.epsilon / ex.epsilon0));
    else if (thK < 4.0 * ex.epsilon / ex.cells_per_epsilon * (1 - 1e-12))
      rd.error("excess", "depth", fmt::format("K too deep: theta^K = {:.6g} spans fewer than 4 cells", thK));
  }

  rd.report_unknown();

  // Families and their parameters are checked by constructing them.
  try {
    (void)make_builtin_coefficients(c.coefficient_family, 2, c.components, c.coefficient_params);
  } catch (const std::exception& e) {
    errors.push_back(fmt::format("[coefficients] {}", e.what()));
  }
  try {
    (void)make_builtin_graph(c.graph_family, c.graph_params);
  } catch (const std::exception& e) {
    errors.push_back(fmt::format("[graph] {}", e.what()));
  }
  if (errors.empty()) res.config = std::move(c);
  return res;
}

inline ConfigResult parse_config_string(const std::string& text, std::optional<Command> forced = std::nullopt) {
  std::istringstream in(text);
  return parse_config_stream(in, forced);
}

inline ConfigResult parse_config(const std::string& path, std::optional<Command> forced = std::nullopt) {
  std::ifstream in(path);
  if (!in) return ConfigResult{std::nullopt, {fmt::format("cannot read config file '{}'", path)}};
  return parse_config_stream(in, forced);
}

inline std::string RunConfig::canonical() const {
  auto list = [](const auto& v) { return fmt::format("{}", fmt::join(v, " ")); };
  std::string s;
  auto line = [&](std::string_view k, const auto& v) { s += fmt::format("{} = {}\n", k, v); };
  line("run.command", to_string(command));
  line("run.output", output);
  line("run.seed", seed);
  line("coefficients.family", coefficient_family);
  line("coefficients.params", list(coefficient_params));
  line("coefficients.components", components);
  line("graph.family", graph_family);
  line("graph.params", list(graph_params));
  line("cell.resolution", cell_resolution);
  line("cell.export_fields", export_fields);
  line("dtn.half_width", dtn.half_width);
  line("dtn.height", dtn.height);
  line("dtn.cells_per_unit", dtn.cells_per_unit);
  line("dtn.top", dtn.top == TopClosure::neumann ? "neumann" : "dirichlet");
  line("dtn.modes", dtn_modes);
  line("dtn.heights", list(dtn_heights));
  line("blayer.truncations", list(truncations));
  line("blayer.cells_per_unit", blayer.cells_per_unit);
  line("blayer.vertical_cells", blayer.vertical_cells);
  line("blayer.cube", cube);
  line("blayer.closure", blayer.closure == LateralClosure::dirichlet ? "dirichlet" : "periodic");
  line("blayer.data", blayer_data);
  line("blayer.data_params", list(blayer_data_params));
  line("blayer.dtn_height", blayer.dtn_height);
  line("blayer.dtn_top", blayer.dtn_top == TopClosure::neumann ? "neumann" : "dirichlet");
  line("blayer.cell_resolution", blayer_cell_resolution);
  line("scan.epsilons", list(scan.epsilons));
  line("scan.radii", list(scan.radii));
  line("scan.radius_points", scan.radius_points);
  line("scan.cells_per_epsilon", scan.cells_per_epsilon);
  line("scan.recipe", to_string(scan.recipe));
  line("scan.cell_resolution", scan_cell_resolution);
  line("excess.epsilon", excess.epsilon);
  line("excess.theta", excess.theta);
  line("excess.depth", excess.depth);
  line("excess.epsilon0", excess.epsilon0);
  line("excess.cells_per_epsilon", excess.cells_per_epsilon);
  line("excess.cell_resolution", excess.cell_resolution);
  line("excess.layer_cells_per_unit", excess.layer_cells_per_unit);
  line("excess.layer_vertical_cells", excess.layer_vertical_cells);
  line("excess.layer_height", excess.layer_height);
  line("excess.recipe", to_string(excess.recipe));
  return s;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace bumpy
