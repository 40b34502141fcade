// crsense: run scenarios and figure presets, write CSV tables.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "crsense/errors.hpp"
#include "crsense/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitNumerical = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSI-adaptive spectrum sensing simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string figure;
  std::optional<std::uint64_t> seed;
  std::optional<int> reps;

  auto* run = app.add_subcommand("run", "Run one scenario from a config file");
  run->add_option("--config", config_path, "Scenario config file")->required();
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--reps", reps, "Override the replication count")->check(CLI::PositiveNumber);
  run->add_option("--out", out_path, "Output CSV")->required();

  auto* preset = app.add_subcommand("preset", "Regenerate a figure preset");
  preset->add_option("--figure", figure, "Figure preset")
      ->required()
      ->check(CLI::IsMember({"fig2", "fig3", "fig4", "fig5", "fig6"}));
  preset->add_option("--reps", reps, "Replications per point")->check(CLI::PositiveNumber);
  preset->add_option("--seed", seed, "Master seed");
  preset->add_option("--out", out_path, "Output CSV")->required();

  auto* validate = app.add_subcommand("validate", "Check a config file and exit");
  validate->add_option("--config", config_path, "Scenario config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run) {
      auto cfg = crsense::load_config(config_path);
      if (seed) cfg.seed = *seed;
      if (reps) cfg.replications = *reps;
      cfg.validate();
      crsense::run_scenario(cfg).write_csv(std::filesystem::path(out_path));
    } else if (*preset) {
      const auto p = crsense::make_preset(crsense::parse_preset_id(figure));
      crsense::RunOptions options;
      options.replications = reps;
      options.seed = seed;
      crsense::run_preset(p, options).write_csv(std::filesystem::path(out_path));
    } else if (*validate) {
      crsense::load_config(config_path);
      std::cout << config_path << ": ok\n";
    }
  } catch (const crsense::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const crsense::ValidationError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const crsense::DomainError& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const crsense::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
