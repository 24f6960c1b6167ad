#pragma once

#include <span>
#include <string>
#include <vector>

#include "stocat/problem.hpp"
#include "stocat/schedules.hpp"
#include "stocat/surrogates.hpp"

namespace stocat {

enum class SolverKind { Ista, ProxSgd, Svrg, Saga };

std::string to_string(SolverKind kind);

enum class Averaging {
  Off,
  /// zhat_t = (1 - rho) zhat_{t-1} + rho z_t with rho = step (mu + kappa).
  Exponential,
  /// Uniform mean of the second half of the iterates.
  UniformTail,
};

struct InnerConfig {
  /// 0 picks default_step(kind, H).
  double step = 0.0;
  /// Multiplies the step; the outer loop's step-size form of bias reduction.
  double step_scale = 1.0;
  /// Number of steps T.
  long budget = 1;
  int batch = 1;
  Averaging averaging = Averaging::Exponential;
  /// SVRG anchor refresh period in steps; 0 means one refresh per data pass.
  long svrg_refresh = 0;
  /// Accuracy the outer loop is asking for. Fixed-budget solvers ignore it.
  double tolerance = 0.0;
  /// Record H(x_out) every this many steps (0 disables; costs a data pass each).
  long trace_every = 0;
};

struct InnerReport {
  /// x_k: the averaged iterate when averaging is on, else z_T.
  Vector x_out;
  /// z_T, the minimizer of the solver's quadratic model.
  Vector model_center;
  long grad_evals = 0;
  long steps = 0;
  std::vector<double> objective_trace;
};

/// 1/(L+mu+kappa) for ISTA and prox-SGD, 1/(3(L+mu+kappa)) for SVRG and SAGA.
double default_step(SolverKind kind, const AuxObjective& H);

/// Deterministic proximal gradient; n gradient evaluations per step.
InnerReport ista_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg);

InnerReport prox_sgd_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                           const Perturbation& perturb, Rng& rng);

InnerReport svrg_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                       const Perturbation& perturb, Rng& rng);

InnerReport saga_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                       const Perturbation& perturb, Rng& rng);

InnerReport inner_solve(SolverKind kind, const AuxObjective& H, const Vector& x0,
                        const InnerConfig& cfg, const Perturbation& perturb, Rng& rng);

/// (C, tau, B, sigma2) for a solver applied to F + kappa/2 |x - y|^2.
/// B = 1/(L + mu + kappa). ISTA and prox-SGD: C = 1, tau = (mu + kappa)/(L + mu + kappa),
/// capped at 1/2 for prox-SGD. SVRG and SAGA: C = 8, tau = 1/n.
/// `sigma2` is the single-sample variance relevant to the solver (full
/// oracle variance for prox-SGD, perturbation variance for SVRG/SAGA); it is
/// divided by `batch`.
SolverContract mk_contract(SolverKind kind, const Problem& problem, double kappa, int batch,
                           double sigma2);

/// SVRG gradient estimator with fresh perturbation draws on every access:
/// g = mean_b[u_i(z) - u_i(anchor)] + ubar(anchor) + mu z + kappa (z - y).
class SvrgEstimator {
 public:
  SvrgEstimator(const AuxObjective& H, Perturbation perturb);

  /// Full perturbed pass at `anchor`; n gradient evaluations.
  void refresh(const Vector& anchor, Rng& rng);
  void estimate(const Vector& z, std::span<const Index> indices, Rng& rng, Vector& out);

  const Vector& anchor() const { return anchor_; }
  const Vector& anchor_mean() const { return anchor_mean_; }

 private:
  const AuxObjective* H_;
  Perturbation perturb_;
  Vector anchor_;
  Vector anchor_mean_;
  Vector tmp_;
};

/// SAGA memory: one stored perturbed loss gradient per example and their mean.
class SagaTable {
 public:
  SagaTable(const AuxObjective& H, Perturbation perturb);

  /// Fills the table with one full perturbed pass at x; n gradient evaluations.
  void initialize(const Vector& x, Rng& rng);
  /// g = mean_b[u_i(z) - table_i] + mean(table) + mu z + kappa (z - y); the
  /// sampled rows are then overwritten with the fresh gradients.
  void estimate(const Vector& z, std::span<const Index> indices, Rng& rng, Vector& out);

  const Vector& mean() const { return mean_; }
  const RowMatrix& table() const { return table_; }
  /// max |running mean - exact mean of rows|.
  double mean_drift() const;

 private:
  const AuxObjective* H_;
  Perturbation perturb_;
  RowMatrix table_;
  Vector mean_;
  RowMatrix fresh_;
  long updates_since_sync_ = 0;
};

}  // namespace stocat
