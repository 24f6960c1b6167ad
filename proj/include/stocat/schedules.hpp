#pragma once

#include <span>
#include <vector>

namespace stocat {

/// q = mu / (mu + kappa).
double q_of(double mu, double kappa);

/// Root in (0,1) of a^2 = (1 - a) alpha_prev^2 + q a, in closed form.
double next_alpha(double alpha_prev, double q);

/// alpha_prev (1 - alpha_prev) / (alpha_prev^2 + alpha_cur).
double beta_coeff(double alpha_prev, double alpha_cur);

/// prod_{t=1..k} (1 - alphas[t]); alphas[0] is alpha_0 and is not used.
double product_A(int k, std::span<const double> alphas);

/// alpha_0, alpha_1, ..., alpha_k.
std::vector<double> alpha_sequence(double alpha0, double q, int k);

/// Momentum recursion driving the extrapolation step.
struct MomentumState {
  double alpha_prev = 1.0;
  double alpha_cur = 1.0;
  double q = 0.0;
  int k = 0;

  /// alpha_0 = 1 in the convex case (mu = 0), sqrt(q) otherwise.
  static MomentumState initial(double q, bool strongly_convex);
  MomentumState advance() const;
  double beta() const { return beta_coeff(alpha_prev, alpha_cur); }
  double residual() const;
};

/// E[h(z_t) - h*] <= C (1 - tau)^t (h(z_0) - h*) + B sigma2.
struct SolverContract {
  double C = 1.0;
  double tau = 1.0;
  double B = 1.0;
  double sigma2 = 0.0;

  void validate() const;
  bool deterministic() const { return sigma2 == 0.0; }
};

/// min(1, target / (2 B sigma2)); 1 in the deterministic regime.
double bias_factor(double target, const SolverContract& contract);

/// eps_k = multiplier * (1 - sqrt(q)/3)^k * F0. Throws for q outside (0,1).
double catalyst_eps_schedule(double F0, double q, int k, double multiplier = 1.0);

/// delta_k = multiplier * (1 - sqrt(q)/2)^k * F0. Throws for q outside (0,1).
double model_delta_schedule(double F0, double q, int k, double multiplier = 1.0);

/// eps_k = F0 / (k+1)^(4 + 2 gamma), for the convex case where the
/// geometric schedules are undefined.
double convex_eps_schedule(double F0, int k, double gamma = 1.0);

struct ToleranceSchedule {
  enum class Kind { CatalystEps, ModelDelta, MinibatchHalving };
  Kind kind = Kind::CatalystEps;
  double F0 = 1.0;
  double q = 0.0;
  double multiplier = 1.0;
  /// Only used by MinibatchHalving: eps_k = 2 B sigma2 / 2^k.
  double B = 0.0;
  double sigma2 = 0.0;

  double at(int k) const;
  /// eps_{k+1} / eps_k.
  double ratio() const;
};

/// t' = ceil((2D/mu)^(1/d)). Throws if D < mu.
long sublinear_restart_period(double D, double mu, double d);

/// Linear contract induced by restarting every `period` steps: C = 1,
/// tau = 1/(2 period).
SolverContract restarted_contract(long period, double B, double sigma2);

/// min(ceil(n / eta), cap).
long inner_budget(long n, double eta, long cap);

/// max(L, sigma (K+1)^(3/2) / R).
double cor2_kappa(double L, double sigma, int K, double R);

/// Mini-batch restart bookkeeping: eta_k = 2^-k, eps_k = 2 B sigma2 eta_k,
/// ceil(log(2C)/tau) steps per stage, ceil(log2(2 B sigma2 / eps)) stages.
double halving_eta(int k);
double halving_eps(const SolverContract& contract, int k);
long halving_stage_steps(const SolverContract& contract);
int halving_stage_count(const SolverContract& contract, double target_eps);

}  // namespace stocat
