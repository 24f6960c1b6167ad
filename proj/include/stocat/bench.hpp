#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "stocat/accelerators.hpp"
#include "stocat/problem.hpp"

namespace stocat {

inline constexpr const char* kVersion = "0.1.0";

enum class MethodId {
  Apg,
  AccProxSgd,
  CatalystIsta,
  CatalystSvrg,
  CatalystSaga,
  RestartSgd,
  Svrg,
  Saga,
  ProxSgd,
};

std::string to_string(MethodId id);
std::optional<MethodId> parse_method(std::string_view name);
/// Registry ids in canonical order.
const std::vector<std::string>& method_names();
/// Methods whose schedules are undefined without strong convexity.
bool requires_strong_convexity(MethodId id);

struct RunConfig {
  /// Exactly one of data_path and synth_n/synth_p is set.
  std::string data_path;
  Index synth_n = 0;
  Index synth_p = 0;
  LossKind loss = LossKind::Logistic;
  Regularizer reg = Regularizer::none();
  /// mu = 1/(mu_frac n); 0 means mu = 0.
  double mu_frac = 10.0;
  double dropout = 0.0;
  std::vector<MethodId> methods;
  int seeds = 5;
  std::uint64_t master_seed = 0;
  double epochs = 50.0;
  int k0 = 30;
  /// c in kappa = max(L/(c n) - mu, 0) for the variance-reduced Catalyst methods.
  double kappa_scale = 5.0;
  std::string out_dir;
  int workers = 1;

  /// Throws std::invalid_argument with a user-facing message.
  void validate() const;
};

/// Raised by parse_cli. `code` is the process exit status; 0 for --help,
/// whose text is what().
class CliError : public std::runtime_error {
 public:
  CliError(const std::string& what, int code) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

RunConfig parse_cli(int argc, const char* const* argv);
RunConfig parse_cli(const std::vector<std::string>& args);

struct FStarEstimate {
  /// min(oracle, every observed run value).
  double value = 0.0;
  double oracle = 0.0;
  /// Upper bound on oracle - F*; +inf when no certificate is available (mu = 0).
  double certificate = 0.0;
  bool certified = false;
  /// A run went below the certified oracle by more than tol.
  bool disagreement = false;
  long iterations = 0;
  double tol = 0.0;
  Vector x;
};

/// Restarted accelerated proximal gradient with exact gradients until the
/// gradient-mapping certificate |G|^2/(2 mu) drops below tol.
FStarEstimate estimate_f_star(const Problem& problem, double tol = 1e-12,
                              long max_iters = 200000);
/// Lowers the estimate to `observed` if smaller; flags disagreement when a
/// certified oracle is beaten by more than its tolerance.
void apply_run_minimum(FStarEstimate& est, double observed);

/// Everything a method run needs besides the problem.
struct MethodSettings {
  double epochs = 50.0;
  int k0 = 30;
  double kappa_scale = 5.0;
  Perturbation perturb;
  /// Oracle minimizer and value; used to size schedules and noise estimates.
  Vector x_star;
  double f_star = 0.0;
  /// Single-sample gradient variance at x_star (prox-SGD family) and the
  /// perturbation-only variance (variance-reduced family).
  double sigma2_full = 0.0;
  double sigma2_vr = 0.0;
};

/// kappa the harness uses for `id` (0 for unaccelerated methods).
double method_kappa(MethodId id, const Problem& problem, double kappa_scale);
/// Inner ISTA steps per outer iteration of catalyst-ista.
long catalyst_ista_inner_steps(const Problem& problem, double kappa);

/// Outer-loop configuration the harness uses for `id`. Warm starts use
/// y_{k-1} when reg = none and x_{k-1} otherwise.
AccelConfig method_config(MethodId id, const Problem& problem, const MethodSettings& settings);

RunTrace run_method(MethodId id, const Problem& problem, const MethodSettings& settings,
                    Rng& rng);

struct CurveRecord {
  std::string method;
  int seed = 0;
  double epoch = 0.0;
  double objective = 0.0;
  double gap = 0.0;
  long grad_evals = 0;
  bool diverged = false;
};

struct SummaryStat {
  std::string method;
  double epoch = 0.0;
  double mean_gap = 0.0;
  /// Sample standard deviation (n - 1 denominator); 0 for a single seed.
  double std_gap = 0.0;
  int count = 0;
};

/// Sorted by method, seed, epoch (stable for equal epochs).
void sort_canonical(std::vector<CurveRecord>& records);
std::vector<SummaryStat> summarize(const std::vector<CurveRecord>& records);

inline constexpr const char* kCsvHeader = "method,seed,epoch,objective,gap,grad_evals,diverged";
void write_csv(std::ostream& out, const std::vector<CurveRecord>& records);
std::vector<CurveRecord> read_csv(std::istream& in);

struct RunOutcome {
  std::string method;
  int seed = 0;
  std::uint64_t rng_seed = 0;
  RunTrace trace;
};

struct ExperimentResult {
  std::vector<CurveRecord> curves;
  std::vector<SummaryStat> summary;
  std::vector<RunOutcome> runs;
  FStarEstimate f_star;
  Index n = 0;
  Index p = 0;
  double mu = 0.0;
  double L = 0.0;
  std::filesystem::path csv_path;
  std::filesystem::path json_path;
};

/// Builds the problem a config describes.
Problem make_problem(const RunConfig& config);

/// Runs every method x seed, writes curves.csv and summary.json into
/// config.out_dir when it is nonempty.
ExperimentResult run_experiment(const RunConfig& config);

nlohmann::json summary_json(const RunConfig& config, const ExperimentResult& result);
nlohmann::json config_json(const RunConfig& config);

}  // namespace stocat
