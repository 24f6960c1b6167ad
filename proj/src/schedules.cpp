#include "stocat/schedules.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace stocat {

double q_of(double mu, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  if (!(mu >= 0.0)) throw std::invalid_argument("mu must be nonnegative");
  return mu / (mu + kappa);
}

double next_alpha(double alpha_prev, double q) {
  if (!(alpha_prev > 0.0 && alpha_prev <= 1.0))
    throw std::invalid_argument("alpha_prev must lie in (0, 1]");
  if (!(q >= 0.0 && q < 1.0)) throw std::invalid_argument("q must lie in [0, 1)");
  // a^2 + b a - c = 0 with b = alpha_prev^2 - q, c = alpha_prev^2.
  const double c = alpha_prev * alpha_prev;
  const double b = c - q;
  const double disc = std::sqrt(b * b + 4.0 * c);
  // Pick the cancellation-free form of the positive root.
  return b > 0.0 ? 2.0 * c / (b + disc) : 0.5 * (disc - b);
}

double beta_coeff(double alpha_prev, double alpha_cur) {
  const double denom = alpha_prev * alpha_prev + alpha_cur;
  if (!(denom > 0.0)) throw std::invalid_argument("beta denominator must be positive");
  return alpha_prev * (1.0 - alpha_prev) / denom;
}

double product_A(int k, std::span<const double> alphas) {
  if (k < 1) throw std::invalid_argument("product_A needs k >= 1");
  if (alphas.size() < static_cast<std::size_t>(k) + 1)
    throw std::invalid_argument("product_A needs alpha_0..alpha_k");
  double a = 1.0;
  for (int t = 1; t <= k; ++t) a *= 1.0 - alphas[static_cast<std::size_t>(t)];
  return a;
}

std::vector<double> alpha_sequence(double alpha0, double q, int k) {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(k) + 1);
  out.push_back(alpha0);
  for (int t = 1; t <= k; ++t) out.push_back(next_alpha(out.back(), q));
  return out;
}

MomentumState MomentumState::initial(double q, bool strongly_convex) {
  MomentumState s;
  s.q = q;
  s.alpha_cur = strongly_convex ? std::sqrt(q) : 1.0;
  s.alpha_prev = s.alpha_cur;
  s.k = 0;
  return s;
}

MomentumState MomentumState::advance() const {
  MomentumState s;
  s.q = q;
  s.alpha_prev = alpha_cur;
  s.alpha_cur = next_alpha(alpha_cur, q);
  s.k = k + 1;
  return s;
}

double MomentumState::residual() const {
  return std::abs(alpha_cur * alpha_cur - (1.0 - alpha_cur) * alpha_prev * alpha_prev -
                  q * alpha_cur);
}

void SolverContract::validate() const {
  if (!(C >= 1.0) || !std::isfinite(C)) throw std::invalid_argument("contract C must be >= 1");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("contract tau must lie in (0,1]");
  if (!(B > 0.0) || !std::isfinite(B)) throw std::invalid_argument("contract B must be positive");
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2))
    throw std::invalid_argument("contract sigma2 must be nonnegative");
}

double bias_factor(double target, const SolverContract& contract) {
  if (!(target > 0.0)) throw std::invalid_argument("bias target must be positive");
  if (contract.sigma2 == 0.0) return 1.0;
  return std::min(1.0, target / (2.0 * contract.B * contract.sigma2));
}

namespace {

double geometric(double F0, double rate, int k, double multiplier) {
  if (k < 0) throw std::invalid_argument("schedule index must be nonnegative");
  return multiplier * std::pow(rate, k) * F0;
}

void check_q(double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("geometric schedules need q in (0,1); use the convex schedule");
}

}  // namespace

double catalyst_eps_schedule(double F0, double q, int k, double multiplier) {
  check_q(q);
  return geometric(F0, 1.0 - std::sqrt(q) / 3.0, k, multiplier);
}

double model_delta_schedule(double F0, double q, int k, double multiplier) {
  check_q(q);
  return geometric(F0, 1.0 - std::sqrt(q) / 2.0, k, multiplier);
}

double convex_eps_schedule(double F0, int k, double gamma) {
  return F0 / std::pow(k + 1.0, 4.0 + 2.0 * gamma);
}

double ToleranceSchedule::at(int k) const {
  switch (kind) {
    case Kind::CatalystEps:
      return catalyst_eps_schedule(F0, q, k, multiplier);
    case Kind::ModelDelta:
      return model_delta_schedule(F0, q, k, multiplier);
    case Kind::MinibatchHalving:
      return multiplier * 2.0 * B * sigma2 * std::ldexp(1.0, -k);
  }
  return 0.0;
}

double ToleranceSchedule::ratio() const {
  switch (kind) {
    case Kind::CatalystEps:
      return 1.0 - std::sqrt(q) / 3.0;
    case Kind::ModelDelta:
      return 1.0 - std::sqrt(q) / 2.0;
    case Kind::MinibatchHalving:
      return 0.5;
  }
  return 0.0;
}

long sublinear_restart_period(double D, double mu, double d) {
  if (!(mu > 0.0) || !(d > 0.0)) throw std::invalid_argument("mu and d must be positive");
  if (D < mu) throw std::invalid_argument("restart needs D >= mu");
  return static_cast<long>(std::ceil(std::pow(2.0 * D / mu, 1.0 / d)));
}

SolverContract restarted_contract(long period, double B, double sigma2) {
  if (period < 1) throw std::invalid_argument("restart period must be positive");
  return SolverContract{1.0, 1.0 / (2.0 * static_cast<double>(period)), B, sigma2};
}

long inner_budget(long n, double eta, long cap) {
  if (n < 1) throw std::invalid_argument("inner_budget needs n >= 1");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0,1]");
  const double raw = std::ceil(static_cast<double>(n) / eta);
  if (raw >= static_cast<double>(cap)) return cap;
  return static_cast<long>(raw);
}

double cor2_kappa(double L, double sigma, int K, double R) {
  if (!(R > 0.0)) throw std::invalid_argument("distance estimate R must be positive");
  if (K < 1) throw std::invalid_argument("budget K must be >= 1");
  return std::max(L, sigma * std::pow(K + 1.0, 1.5) / R);
}

double halving_eta(int k) { return std::ldexp(1.0, -k); }

double halving_eps(const SolverContract& contract, int k) {
  return 2.0 * contract.B * contract.sigma2 * halving_eta(k);
}

long halving_stage_steps(const SolverContract& contract) {
  contract.validate();
  return static_cast<long>(std::ceil(std::log(2.0 * contract.C) / contract.tau));
}

int halving_stage_count(const SolverContract& contract, double target_eps) {
  if (!(target_eps > 0.0)) throw std::invalid_argument("target accuracy must be positive");
  if (contract.sigma2 == 0.0) return 0;
  const double ratio = 2.0 * contract.B * contract.sigma2 / target_eps;
  if (ratio <= 1.0) return 0;
  return static_cast<int>(std::ceil(std::log2(ratio)));
}

}  // namespace stocat
