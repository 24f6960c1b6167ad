#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "stocat/inner_solvers.hpp"
#include "stocat/problem.hpp"
#include "stocat/schedules.hpp"
#include "stocat/surrogates.hpp"

namespace stocat {

enum class WarmStart { PrevX, PrevY };

/// How the bias factor eta < 1 is paid for: a mini-batch of ceil(1/eta)
/// samples per step, or a step size scaled by eta with 1/eta more steps.
enum class BiasMode { MiniBatch, StepSize };

struct TraceRecord {
  int k = 0;
  double objective = 0.0;
  long grad_evals = 0;
  double epochs = 0.0;
  double eta = 1.0;
  /// eps_k, delta_k, or the stage target, depending on the driver.
  double tolerance = 0.0;
  long inner_budget = 0;
  int batch = 0;
  double alpha = 0.0;
  double beta = 0.0;
  double seconds = 0.0;
};

struct RunTrace {
  std::vector<TraceRecord> records;
  Vector x_final;
  bool diverged = false;
  std::string message;
  double kappa = 0.0;
  /// x_0..x_K and y_0..y_K, kept only when AccelConfig::record_iterates is set.
  std::vector<Vector> xs;
  std::vector<Vector> ys;
};

/// Mutable state of an outer loop. The three trailing iterates feed the
/// warm-restart diagnostic.
struct OuterState {
  Vector x_prev;
  Vector x_cur;
  Vector y_cur;
  MomentumState momentum;
  int k = 0;
  std::vector<Vector> trailing;
};

struct AccelConfig {
  double kappa = 0.0;
  /// Empty means the zero vector.
  Vector x0;
  int outer_iters = 100;
  /// Stop once this many data passes have been spent.
  double max_epochs = std::numeric_limits<double>::infinity();
  WarmStart warm_start = WarmStart::PrevX;
  /// eta_k is held at 1 until k0 data passes have been spent.
  int k0 = 30;
  ToleranceSchedule::Kind schedule = ToleranceSchedule::Kind::CatalystEps;
  double schedule_multiplier = 1.0;
  /// F0 = F(x0) - f_star_estimate anchors the tolerance schedules.
  double f_star_estimate = 0.0;
  /// step, batch, averaging, refresh period. Its budget field is replaced by
  /// plan_inner.
  InnerConfig inner;
  /// Inner steps per outer iteration at eta = 1 (0 means n).
  long inner_steps = 0;
  /// Cap on the per-iteration sample budget (0 means 100 n).
  long inner_cap = 0;
  BiasMode bias_mode = BiasMode::MiniBatch;
  SolverContract contract;
  Perturbation perturb;
  int record_every = 1;
  bool record_iterates = false;
  double divergence_factor = 1e6;
};

// ---------------------------------------------------------------------------
// Algorithm 1: exact minimization of a quadratic surrogate
// ---------------------------------------------------------------------------

struct OuterView {
  int k;
  const Vector& x_prev;
  const Vector& y_prev;
  /// Data passes spent before iteration k.
  double epochs = 0.0;
};

struct ModelStep {
  QuadraticModel model;
  /// x_k; equals model.minimizer() for closed-form surrogates.
  Vector x_out;
  long grad_evals = 0;
  double eta = 1.0;
  double tolerance = 0.0;
  long inner_budget = 0;
  int batch = 0;
};

using SurrogateBuilder = std::function<ModelStep(const OuterView&, Rng&)>;

/// y_k = x*_k + beta_k (x*_k - x_{k-1}) + ((kappa+mu)(1-alpha_k)/kappa) (x_k - x*_k).
RunTrace run_algorithm1(const Problem& problem, const AccelConfig& config,
                        const SurrogateBuilder& builder, Rng& rng);

/// Proximal-gradient model with curvature L_eff. Uses the exact gradient, or
/// a full perturbed pass when `perturb` is active.
SurrogateBuilder gradient_model_builder(const Problem& problem, double L_eff,
                                        Perturbation perturb = {});

/// Stochastic-gradient model with curvature kappa + mu and a mini-batch
/// gradient estimate.
SurrogateBuilder stochastic_model_builder(const Problem& problem, double kappa, int batch,
                                          Perturbation perturb);

// ---------------------------------------------------------------------------
// Algorithm 2: inexact minimization of F + kappa/2 |x - y|^2
// ---------------------------------------------------------------------------

using InnerSolverFn =
    std::function<InnerReport(const AuxObjective&, const Vector&, const InnerConfig&, Rng&)>;

InnerSolverFn make_inner_solver(SolverKind kind, Perturbation perturb);

/// Concrete inner step count, batch and step for a bias factor eta.
InnerConfig plan_inner(const AccelConfig& config, long n, double eta);

RunTrace run_algorithm2(const Problem& problem, const AccelConfig& config,
                        const InnerSolverFn& inner, Rng& rng);

/// Algorithm 1 where each surrogate is the quadratic model returned by an
/// inner solve of H_k (delta_k schedule, eta_k = min(1, delta_k/(2 B sigma2))
/// once k0 data passes have been spent). With kappa <= 0 no acceleration is
/// possible and the inner solver is restarted on F directly.
RunTrace run_prop5(const Problem& problem, const AccelConfig& config,
                   const InnerSolverFn& inner, Rng& rng);

/// Convex case with a fixed budget K: kappa = max(L, sigma (K+1)^{3/2}/R).
RunTrace accelerated_prox_sgd_convex(const Problem& problem, int K, double R_estimate,
                                     double sigma_estimate, Rng& rng, int batch = 1,
                                     Perturbation perturb = {}, int record_every = 1);

/// 2 L R^2/(K+1)^2 + 3 sigma R / sqrt(K+1).
double cor2_bound(double L, double sigma, int K, double R);

// ---------------------------------------------------------------------------
// Restart wrappers
// ---------------------------------------------------------------------------

struct StageRequest {
  long steps = 1;
  int batch = 1;
  double step_scale = 1.0;
};

struct StageResult {
  Vector x;
  long grad_evals = 0;
};

using StageSolver = std::function<StageResult(const Vector&, const StageRequest&, Rng&)>;

/// Prox-SGD on F itself. step = 0 means 1/(L + mu).
StageSolver prox_sgd_stage_solver(const Problem& problem, Perturbation perturb, double step,
                                  Averaging averaging);

struct RestartConfig {
  double target_eps = 0.0;
  /// Upper estimate of F(x0) - F*, sizes the initial linear phase.
  double f0_estimate = 1.0;
  Vector x0;
  BiasMode mode = BiasMode::MiniBatch;
};

/// Stage 0 runs ceil(log(C F0 / (B sigma2)) / tau) steps to reach 2 B sigma2;
/// stage k >= 1 runs ceil(log(2C)/tau) steps with batch 2^k (or step 2^-k and
/// 2^k times more steps) until eps_k <= target.
RunTrace run_restart_minibatch(const Problem& problem, const StageSolver& base,
                               const SolverContract& contract, const RestartConfig& config,
                               Rng& rng);

struct SublinearRestart {
  RunTrace trace;
  SolverContract contract;
  long period = 0;
};

/// Runs `restarts` rounds of period t' = ceil((2D/mu)^{1/d}) steps, each warm
/// started at the previous output. Throws if D < mu.
SublinearRestart run_restart_sublinear(const Problem& problem, const StageSolver& base,
                                       double D, double d, int restarts, double B,
                                       double sigma2, const Vector& x0, Rng& rng);

/// Wraps a sublinear solver so that every request is served by restarts of
/// `period` steps; composes with run_restart_minibatch.
StageSolver restarted_stage_solver(StageSolver base, long period);

}  // namespace stocat
