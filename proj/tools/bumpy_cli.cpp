#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "bumpy/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Homogenization and boundary-layer experiments in bumpy Lipschitz domains"};
  app.require_subcommand(1);
  std::string config_path, output;
  bumpy::RunOptions opt;
  int threads = 0;
  app.add_flag("--dry-run", opt.dry_run, "Validate the config and print it without solving");
  app.add_flag("--plot-data", opt.plot_data, "Also write whitespace-separated .dat files for gnuplot");
  app.add_option("-o,--output", output, "Override [run] output directory");
  app.add_option("-j,--threads", threads, "Worker threads (overrides BUMPY_THREADS)")->check(CLI::PositiveNumber);

  std::optional<bumpy::Command> forced;
  auto add = [&](const char* name, const char* help, std::optional<bumpy::Command> cmd) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
    sub->callback([&forced, cmd] { forced = cmd; });
  };
  add("run", "Run the command named in [run] command", std::nullopt);
  add("cell", "Cell correctors and the homogenized tensor", bumpy::Command::cell);
  add("dtn", "Dirichlet-to-Neumann symbol table and truncation study", bumpy::Command::dtn);
  add("blayer", "Boundary-layer uloc norms and Saint-Venant profiles", bumpy::Command::blayer);
  add("lipschitz", "Normalized energy scan M(eps, r)", bumpy::Command::lipschitz);
  add("homog", "Homogenization error against eps", bumpy::Command::homog);
  add("excess", "Excess decay against the corrector-plus-layer profile", bumpy::Command::excess);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : bumpy::exit_validation;
  }

  if (threads > 0) setenv("BUMPY_THREADS", std::to_string(threads).c_str(), 1);
  auto parsed = bumpy::parse_config(config_path, forced);
  if (!parsed.config) {
    for (const auto& e : parsed.errors) std::cerr << config_path << ": " << e << '\n';
    std::cerr << parsed.errors.size() << " configuration error(s); nothing was run\n";
    return bumpy::exit_validation;
  }
  if (!output.empty()) parsed.config->output = output;
  if (opt.dry_run) opt.log = &std::cout;
  return bumpy::run(*parsed.config, opt);
}
