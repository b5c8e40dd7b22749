#include <CLI11.hpp>

#include <exception>
#include <iostream>

#include "nlbranch/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "nlbranch: simulate nonlinear branching processes with immigration, "
      "evaluate their regularity/recurrence/ergodicity criteria and "
      "cross-validate against truncated-chain numerics"};

  nlbranch::RunConfig config;
  app.add_option("--model", config.model_path, "model JSON file")->required();
  app.add_option("--command", config.command,
                 "one of validate|classify|simulate|hitting|stationary|"
                 "bounds|crosscheck")
      ->required();
  app.add_option("--truncation", config.truncation,
                 "starting truncation for the numeric oracle");
  app.add_option("--seed", config.seed, "RNG seed");
  app.add_option("--replicas", config.replicas, "Monte Carlo replicas");
  app.add_option("--horizon", config.horizon, "simulation time horizon");
  app.add_option("--state-cap", config.state_cap,
                 "state level treated as an explosion proxy");
  app.add_option("--jump-cap", config.jump_cap, "maximum jumps per path");
  app.add_option("--tol", config.tol, "truncation-stability tolerance");
  app.add_option("--x0", config.x0, "initial state for path commands");
  app.add_option("--out", config.out_path, "output file (default stdout)");
  app.add_option("--format", config.format, "json or csv");

  CLI11_PARSE(app, argc, argv);

  try {
    return nlbranch::run(config);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nlbranch::kExitInvalidModel;
  } catch (const nlbranch::SingularSystem& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nlbranch::kExitUnstableTruncation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return nlbranch::kExitInvalidModel;
  }
}
