#include <cstdio>
#include <exception>
#include <iostream>

#include "stocat/bench.hpp"

int main(int argc, char** argv) {
  using namespace stocat;
  RunConfig config;
  try {
    config = parse_cli(argc, argv);
  } catch (const CliError& e) {
    (e.code() == 0 ? std::cout : std::cerr) << e.what() << '\n';
    return e.code();
  }
  try {
    const ExperimentResult result = run_experiment(config);
    std::size_t diverged = 0;
    for (const auto& r : result.runs) diverged += r.trace.diverged ? 1 : 0;
    std::fprintf(stderr, "F* estimate %.17g (oracle %s, %ld iterations)\n", result.f_star.value,
                 result.f_star.certified ? "certified" : "NOT certified",
                 result.f_star.iterations);
    if (result.f_star.disagreement)
      std::fprintf(stderr, "warning: runs went below the certified F* oracle\n");
    if (diverged) std::fprintf(stderr, "warning: %zu run(s) diverged\n", diverged);
    if (!result.csv_path.empty())
      std::fprintf(stderr, "wrote %s and %s\n", result.csv_path.c_str(),
                   result.json_path.c_str());
    else
      write_csv(std::cout, result.curves);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
