#include "stocat/accelerators.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace stocat {

namespace {

using Clock = std::chrono::steady_clock;

Vector initial_point(const Problem& problem, const Vector& x0) {
  if (x0.size() == 0) return Vector::Zero(problem.p());
  if (x0.size() != problem.p()) throw std::invalid_argument("dimension mismatch for x0");
  return x0;
}

void validate(const Problem& problem, const AccelConfig& cfg) {
  if (cfg.outer_iters < 0) throw std::invalid_argument("outer_iters must be nonnegative");
  if (cfg.record_every < 1) throw std::invalid_argument("record_every must be >= 1");
  if (cfg.k0 < 0) throw std::invalid_argument("k0 must be nonnegative");
  if (!(cfg.divergence_factor > 1.0))
    throw std::invalid_argument("divergence factor must exceed 1");
  if (cfg.warm_start == WarmStart::PrevY && !problem.reg().is_zero())
    throw std::invalid_argument("warm start at y_{k-1} requires reg = none; use prev_x");
  cfg.contract.validate();
  cfg.perturb.validate();
}

double f0_of(double fx0, double f_star_estimate) {
  return std::max(fx0 - f_star_estimate, 1e-300);
}

/// Appends trace records, keeps counters cumulative and applies the
/// divergence guard on recorded objectives.
class Tracker {
 public:
  Tracker(const Problem& problem, const AccelConfig& cfg, RunTrace& trace)
      : problem_(problem), cfg_(cfg), trace_(trace), start_(Clock::now()) {}

  double begin(const Vector& x0, double alpha0) {
    f0_ = problem_.value(x0);
    if (!std::isfinite(f0_)) throw DivergenceError("non-finite objective at x0");
    TraceRecord r;
    r.objective = f0_;
    r.alpha = alpha0;
    trace_.records.push_back(r);
    if (cfg_.record_iterates) {
      trace_.xs.push_back(x0);
      trace_.ys.push_back(x0);
    }
    return f0_;
  }

  /// `r.grad_evals` holds the increment on entry. Returns false when the run
  /// must stop (epoch budget spent).
  bool step(TraceRecord r, const Vector& x, const Vector& y) {
    if (!x.allFinite() || !y.allFinite())
      throw DivergenceError("non-finite iterate at outer iteration " + std::to_string(r.k));
    evals_ += r.grad_evals;
    r.grad_evals = evals_;
    r.epochs = static_cast<double>(evals_) / static_cast<double>(problem_.n());
    if (cfg_.record_iterates) {
      trace_.xs.push_back(x);
      trace_.ys.push_back(y);
    }
    const bool out_of_budget = r.epochs >= cfg_.max_epochs;
    const bool last = r.k >= cfg_.outer_iters || out_of_budget;
    if (r.k % cfg_.record_every == 0 || last) {
      r.objective = problem_.value(x);
      r.seconds = std::chrono::duration<double>(Clock::now() - start_).count();
      trace_.records.push_back(r);
      if (!std::isfinite(r.objective) ||
          r.objective > cfg_.divergence_factor * std::max(std::abs(f0_), 1.0))
        throw DivergenceError("objective left the divergence guard at outer iteration " +
                              std::to_string(r.k));
    }
    return !out_of_budget;
  }

  double epochs() const { return static_cast<double>(evals_) / static_cast<double>(problem_.n()); }

  void diverged(const char* what) {
    trace_.diverged = true;
    trace_.message = what;
  }

  void note_cap(int k) {
    if (!cap_logged_) {
      if (!trace_.message.empty()) trace_.message += "; ";
      trace_.message += "inner budget cap binding from outer iteration " + std::to_string(k);
      cap_logged_ = true;
    }
  }

 private:
  const Problem& problem_;
  const AccelConfig& cfg_;
  RunTrace& trace_;
  Clock::time_point start_;
  double f0_ = 0.0;
  long evals_ = 0;
  bool cap_logged_ = false;
};

void advance(OuterState& s, Vector x_new, Vector y_new) {
  s.x_prev = std::move(s.x_cur);
  s.x_cur = std::move(x_new);
  s.y_cur = std::move(y_new);
  s.trailing.insert(s.trailing.begin(), s.x_prev);
  if (s.trailing.size() > 3) s.trailing.pop_back();
  ++s.k;
}

OuterState start_state(const Vector& x0, double q, bool strongly_convex) {
  OuterState s;
  s.x_prev = x0;
  s.x_cur = x0;
  s.y_cur = x0;
  s.momentum = MomentumState::initial(q, strongly_convex);
  return s;
}

long sample_cap(const AccelConfig& cfg, long n) { return cfg.inner_cap > 0 ? cfg.inner_cap : 100 * n; }

}  // namespace

// ---------------------------------------------------------------------------
// Algorithm 1
// ---------------------------------------------------------------------------

RunTrace run_algorithm1(const Problem& problem, const AccelConfig& cfg,
                        const SurrogateBuilder& builder, Rng& rng) {
  validate(problem, cfg);
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  const double mu = problem.mu();
  const double kappa = cfg.kappa;
  RunTrace trace;
  trace.kappa = kappa;
  Tracker tracker(problem, cfg, trace);
  OuterState s = start_state(initial_point(problem, cfg.x0), q_of(mu, kappa), mu > 0.0);
  tracker.begin(s.x_cur, s.momentum.alpha_cur);
  try {
    for (int k = 1; k <= cfg.outer_iters; ++k) {
      ModelStep step = builder(OuterView{k, s.x_cur, s.y_cur, tracker.epochs()}, rng);
      const Vector xstar = step.model.minimizer();
      s.momentum = s.momentum.advance();
      const double beta = s.momentum.beta();
      const double corr = (kappa + mu) * (1.0 - s.momentum.alpha_cur) / kappa;
      Vector y = xstar + beta * (xstar - s.x_cur) + corr * (step.x_out - xstar);
      advance(s, std::move(step.x_out), std::move(y));

      TraceRecord r;
      r.k = k;
      r.grad_evals = step.grad_evals;
      r.eta = step.eta;
      r.tolerance = step.tolerance;
      r.inner_budget = step.inner_budget;
      r.batch = step.batch;
      r.alpha = s.momentum.alpha_cur;
      r.beta = beta;
      if (!tracker.step(r, s.x_cur, s.y_cur)) break;
    }
  } catch (const DivergenceError& e) {
    tracker.diverged(e.what());
  }
  trace.x_final = s.x_cur;
  return trace;
}

SurrogateBuilder gradient_model_builder(const Problem& problem, double L_eff,
                                        Perturbation perturb) {
  if (!(L_eff > 0.0)) throw std::invalid_argument("model curvature must be positive");
  perturb.validate();
  return [&problem, L_eff, perturb](const OuterView& view, Rng& rng) {
    Vector g;
    if (perturb.active()) {
      std::vector<Index> all(static_cast<std::size_t>(problem.n()));
      for (Index i = 0; i < problem.n(); ++i) all[static_cast<std::size_t>(i)] = i;
      g = gradient_at_indices(problem, view.y_prev, all, perturb, rng);
    } else {
      g = problem.gradient(view.y_prev);
    }
    QuadraticModel model(view.y_prev - g / L_eff, L_eff, problem.reg(), view.y_prev);
    Vector x = model.minimizer();
    ModelStep step{std::move(model), std::move(x)};
    step.grad_evals = static_cast<long>(problem.n());
    step.inner_budget = 1;
    step.batch = static_cast<int>(problem.n());
    return step;
  };
}

SurrogateBuilder stochastic_model_builder(const Problem& problem, double kappa, int batch,
                                          Perturbation perturb) {
  if (batch < 1) throw std::invalid_argument("batch must be >= 1");
  perturb.validate();
  return [&problem, kappa, batch, perturb](const OuterView& view, Rng& rng) {
    GradientSample gs = sample_gradient(problem, view.y_prev, batch, perturb, rng);
    QuadraticModel model =
        stoch_grad_model_min(gs.g, view.y_prev, kappa, problem.mu(), problem.reg());
    Vector x = model.minimizer();
    ModelStep step{std::move(model), std::move(x)};
    step.grad_evals = batch;
    step.inner_budget = 1;
    step.batch = batch;
    return step;
  };
}

// ---------------------------------------------------------------------------
// Algorithm 2
// ---------------------------------------------------------------------------

InnerSolverFn make_inner_solver(SolverKind kind, Perturbation perturb) {
  perturb.validate();
  return [kind, perturb](const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                         Rng& rng) { return inner_solve(kind, H, x0, cfg, perturb, rng); };
}

InnerConfig plan_inner(const AccelConfig& cfg, long n, double eta) {
  const long base = cfg.inner_steps > 0 ? cfg.inner_steps : n;
  const long samples = inner_budget(base, eta, std::max(sample_cap(cfg, n), base));
  InnerConfig icfg = cfg.inner;
  if (cfg.bias_mode == BiasMode::MiniBatch) {
    const long mult = static_cast<long>(std::ceil(1.0 / eta - 1e-12));
    icfg.batch = static_cast<int>(std::min<long>(cfg.inner.batch * mult, 1L << 30));
    icfg.budget = std::max(1L, (samples + mult - 1) / mult);
  } else {
    icfg.step_scale = cfg.inner.step_scale * eta;
    icfg.budget = samples;
  }
  return icfg;
}

namespace {

bool capped(const AccelConfig& cfg, long n, double eta) {
  const long base = cfg.inner_steps > 0 ? cfg.inner_steps : n;
  return std::ceil(static_cast<double>(base) / eta) > static_cast<double>(sample_cap(cfg, n));
}

Vector warm_point(const AccelConfig& cfg, const Vector& x_prev, const Vector& y_prev) {
  return cfg.warm_start == WarmStart::PrevX ? x_prev : y_prev;
}

}  // namespace

RunTrace run_algorithm2(const Problem& problem, const AccelConfig& cfg,
                        const InnerSolverFn& inner, Rng& rng) {
  validate(problem, cfg);
  if (!(cfg.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  const double mu = problem.mu();
  const double kappa = cfg.kappa;
  const double q = q_of(mu, kappa);
  const long n = static_cast<long>(problem.n());
  RunTrace trace;
  trace.kappa = kappa;
  Tracker tracker(problem, cfg, trace);
  OuterState s = start_state(initial_point(problem, cfg.x0), q, mu > 0.0);
  const double F0 = f0_of(tracker.begin(s.x_cur, s.momentum.alpha_cur), cfg.f_star_estimate);

  auto eps_at = [&](int k) {
    if (mu <= 0.0) return cfg.schedule_multiplier * convex_eps_schedule(F0, k);
    if (cfg.schedule == ToleranceSchedule::Kind::ModelDelta)
      return model_delta_schedule(F0, q, k, cfg.schedule_multiplier);
    return catalyst_eps_schedule(F0, q, k, cfg.schedule_multiplier);
  };

  try {
    for (int k = 1; k <= cfg.outer_iters; ++k) {
      const double eps = eps_at(k);
      const double eta = bias_factor(eps, cfg.contract);
      if (capped(cfg, n, eta)) tracker.note_cap(k);
      InnerConfig icfg = plan_inner(cfg, n, eta);
      icfg.tolerance = eps;
      const AuxObjective H = build_aux(problem, kappa, s.y_cur);
      InnerReport rep = inner(H, warm_point(cfg, s.x_cur, s.y_cur), icfg, rng);

      s.momentum = s.momentum.advance();
      const double beta = s.momentum.beta();
      Vector y = rep.x_out + beta * (rep.x_out - s.x_cur);
      advance(s, std::move(rep.x_out), std::move(y));

      TraceRecord r;
      r.k = k;
      r.grad_evals = rep.grad_evals;
      r.eta = eta;
      r.tolerance = eps;
      r.inner_budget = icfg.budget * icfg.batch;
      r.batch = icfg.batch;
      r.alpha = s.momentum.alpha_cur;
      r.beta = beta;
      if (!tracker.step(r, s.x_cur, s.y_cur)) break;
    }
  } catch (const DivergenceError& e) {
    tracker.diverged(e.what());
  }
  trace.x_final = s.x_cur;
  return trace;
}

namespace {

/// Plain restarted inner solver on F, used when kappa clamps to zero.
RunTrace run_unaccelerated(const Problem& problem, const AccelConfig& cfg,
                           const InnerSolverFn& inner, Rng& rng) {
  const long n = static_cast<long>(problem.n());
  RunTrace trace;
  trace.kappa = 0.0;
  Tracker tracker(problem, cfg, trace);
  Vector x = initial_point(problem, cfg.x0);
  const double F0 = f0_of(tracker.begin(x, 1.0), cfg.f_star_estimate);
  const AuxObjective H = unshifted(problem);
  try {
    for (int k = 1; k <= cfg.outer_iters; ++k) {
      const double delta = cfg.schedule_multiplier * F0 * std::ldexp(1.0, -k);
      const double eta = tracker.epochs() < cfg.k0 ? 1.0 : bias_factor(delta, cfg.contract);
      if (capped(cfg, n, eta)) tracker.note_cap(k);
      InnerConfig icfg = plan_inner(cfg, n, eta);
      icfg.tolerance = delta;
      InnerReport rep = inner(H, x, icfg, rng);
      x = std::move(rep.x_out);
      TraceRecord r;
      r.k = k;
      r.grad_evals = rep.grad_evals;
      r.eta = eta;
      r.tolerance = delta;
      r.inner_budget = icfg.budget * icfg.batch;
      r.batch = icfg.batch;
      r.alpha = 1.0;
      if (!tracker.step(r, x, x)) break;
    }
  } catch (const DivergenceError& e) {
    tracker.diverged(e.what());
  }
  trace.x_final = x;
  return trace;
}

}  // namespace

RunTrace run_prop5(const Problem& problem, const AccelConfig& cfg, const InnerSolverFn& inner,
                   Rng& rng) {
  validate(problem, cfg);
  if (!(cfg.kappa > 0.0)) return run_unaccelerated(problem, cfg, inner, rng);
  const double mu = problem.mu();
  if (!(mu > 0.0)) throw std::invalid_argument("optimality-gap driver requires mu > 0");
  const double kappa = cfg.kappa;
  const double q = q_of(mu, kappa);
  const long n = static_cast<long>(problem.n());
  const Vector x0 = initial_point(problem, cfg.x0);
  const double F0 = f0_of(problem.value(x0), cfg.f_star_estimate);

  bool cap_hit = false;
  int cap_from = 0;
  SurrogateBuilder builder = [&](const OuterView& view, Rng& r) {
    const double delta = model_delta_schedule(F0, q, view.k, cfg.schedule_multiplier);
    const double eta = view.epochs < cfg.k0 ? 1.0 : bias_factor(delta, cfg.contract);
    if (!cap_hit && capped(cfg, n, eta)) {
      cap_hit = true;
      cap_from = view.k;
    }
    InnerConfig icfg = plan_inner(cfg, n, eta);
    icfg.tolerance = delta;
    const AuxObjective H = build_aux(problem, kappa, view.y_prev);
    InnerReport rep = inner(H, warm_point(cfg, view.x_prev, view.y_prev), icfg, r);
    ModelStep step{solver_model(rep, mu, kappa, view.y_prev), std::move(rep.x_out)};
    step.grad_evals = rep.grad_evals;
    step.eta = eta;
    step.tolerance = delta;
    step.inner_budget = icfg.budget * icfg.batch;
    step.batch = icfg.batch;
    return step;
  };
  RunTrace trace = run_algorithm1(problem, cfg, builder, rng);
  if (cap_hit) {
    if (!trace.message.empty()) trace.message += "; ";
    trace.message += "inner budget cap binding from outer iteration " + std::to_string(cap_from);
  }
  return trace;
}

RunTrace accelerated_prox_sgd_convex(const Problem& problem, int K, double R_estimate,
                                     double sigma_estimate, Rng& rng, int batch,
                                     Perturbation perturb, int record_every) {
  if (K < 1) throw std::invalid_argument("budget K must be >= 1");
  if (problem.mu() != 0.0) throw std::invalid_argument("fixed-budget convex driver requires mu = 0");
  if (!(sigma_estimate >= 0.0)) throw std::invalid_argument("sigma estimate must be nonnegative");
  const double kappa = cor2_kappa(problem.smoothness(), sigma_estimate, K, R_estimate);
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = K;
  cfg.perturb = perturb;
  cfg.record_every = record_every;
  SurrogateBuilder builder = sigma_estimate == 0.0
                                 ? gradient_model_builder(problem, kappa)
                                 : stochastic_model_builder(problem, kappa, batch, perturb);
  return run_algorithm1(problem, cfg, builder, rng);
}

double cor2_bound(double L, double sigma, int K, double R) {
  const double k1 = static_cast<double>(K) + 1.0;
  return 2.0 * L * R * R / (k1 * k1) + 3.0 * sigma * R / std::sqrt(k1);
}

// ---------------------------------------------------------------------------
// Restart wrappers
// ---------------------------------------------------------------------------

StageSolver prox_sgd_stage_solver(const Problem& problem, Perturbation perturb, double step,
                                  Averaging averaging) {
  perturb.validate();
  if (step < 0.0) throw std::invalid_argument("step must be positive");
  return [&problem, perturb, step, averaging](const Vector& start, const StageRequest& req,
                                              Rng& rng) {
    StageResult out;
    if (req.steps < 1) {
      out.x = start;
      return out;
    }
    const AuxObjective H = unshifted(problem);
    InnerConfig cfg;
    cfg.step = step;
    cfg.step_scale = req.step_scale;
    cfg.budget = req.steps;
    cfg.batch = req.batch;
    cfg.averaging = averaging;
    InnerReport rep = prox_sgd_solve(H, start, cfg, perturb, rng);
    out.x = std::move(rep.x_out);
    out.grad_evals = rep.grad_evals;
    return out;
  };
}

namespace {

long linear_phase_steps(const SolverContract& c, double from, double to) {
  if (!(c.C * from > to)) return 0;
  return static_cast<long>(std::ceil(std::log(c.C * from / to) / c.tau));
}

struct StageLog {
  const Problem& problem;
  RunTrace& trace;
  Clock::time_point start = Clock::now();
  long evals = 0;

  void push(int k, const Vector& x, long increment, double eta, double tol, long budget,
            int batch) {
    evals += increment;
    TraceRecord r;
    r.k = k;
    r.objective = problem.value(x);
    r.grad_evals = evals;
    r.epochs = static_cast<double>(evals) / static_cast<double>(problem.n());
    r.eta = eta;
    r.tolerance = tol;
    r.inner_budget = budget;
    r.batch = batch;
    r.alpha = 1.0;
    r.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    trace.records.push_back(r);
  }
};

}  // namespace

RunTrace run_restart_minibatch(const Problem& problem, const StageSolver& base,
                               const SolverContract& contract, const RestartConfig& config,
                               Rng& rng) {
  if (!(config.target_eps > 0.0)) throw std::invalid_argument("target_eps must be positive");
  if (!(config.f0_estimate > 0.0)) throw std::invalid_argument("f0 estimate must be positive");
  contract.validate();
  RunTrace trace;
  StageLog log{problem, trace};
  Vector x = initial_point(problem, config.x0);
  log.push(0, x, 0, 1.0, config.f0_estimate, 0, 0);

  try {
    if (contract.deterministic()) {
      const long t = std::max(1L, linear_phase_steps(contract, config.f0_estimate,
                                                     config.target_eps));
      StageResult res = base(x, StageRequest{t, 1, 1.0}, rng);
      x = std::move(res.x);
      log.push(1, x, res.grad_evals, 1.0, config.target_eps, t, 1);
      trace.x_final = x;
      return trace;
    }

    // Stage 0: linear phase down to the noise floor 2 B sigma2.
    const double floor = contract.B * contract.sigma2;
    const long t0 = linear_phase_steps(contract, config.f0_estimate, floor);
    StageResult res0 = base(x, StageRequest{t0, 1, 1.0}, rng);
    if (t0 > 0) x = std::move(res0.x);
    log.push(1, x, res0.grad_evals, 1.0, halving_eps(contract, 0), t0, 1);

    const int K = halving_stage_count(contract, config.target_eps);
    if (K > 30) throw std::invalid_argument("target_eps needs more than 30 halving stages");
    const long steps = halving_stage_steps(contract);
    for (int k = 1; k <= K; ++k) {
      const long mult = 1L << k;
      StageRequest req;
      if (config.mode == BiasMode::MiniBatch) {
        req = StageRequest{steps, static_cast<int>(mult), 1.0};
      } else {
        req = StageRequest{steps * mult, 1, halving_eta(k)};
      }
      StageResult res = base(x, req, rng);
      x = std::move(res.x);
      if (!x.allFinite()) throw DivergenceError("non-finite iterate at stage " + std::to_string(k));
      log.push(k + 1, x, res.grad_evals, halving_eta(k), halving_eps(contract, k),
               req.steps * req.batch, req.batch);
    }
  } catch (const DivergenceError& e) {
    trace.diverged = true;
    trace.message = e.what();
  }
  trace.x_final = x;
  return trace;
}

SublinearRestart run_restart_sublinear(const Problem& problem, const StageSolver& base,
                                       double D, double d, int restarts, double B,
                                       double sigma2, const Vector& x0, Rng& rng) {
  if (restarts < 0) throw std::invalid_argument("restart count must be nonnegative");
  SublinearRestart out;
  out.period = sublinear_restart_period(D, problem.mu(), d);
  out.contract = restarted_contract(out.period, B, sigma2);
  StageLog log{problem, out.trace};
  Vector x = initial_point(problem, x0);
  log.push(0, x, 0, 1.0, 0.0, 0, 0);
  try {
    for (int s = 1; s <= restarts; ++s) {
      StageResult res = base(x, StageRequest{out.period, 1, 1.0}, rng);
      x = std::move(res.x);
      if (!x.allFinite()) throw DivergenceError("non-finite iterate at restart " + std::to_string(s));
      log.push(s, x, res.grad_evals, 1.0, 0.0, out.period, 1);
    }
  } catch (const DivergenceError& e) {
    out.trace.diverged = true;
    out.trace.message = e.what();
  }
  out.trace.x_final = x;
  return out;
}

StageSolver restarted_stage_solver(StageSolver base, long period) {
  if (period < 1) throw std::invalid_argument("restart period must be >= 1");
  return [base = std::move(base), period](const Vector& start, const StageRequest& req,
                                          Rng& rng) {
    StageResult out;
    out.x = start;
    for (long done = 0; done < req.steps; done += period) {
      StageRequest piece = req;
      piece.steps = std::min(period, req.steps - done);
      StageResult res = base(out.x, piece, rng);
      out.x = std::move(res.x);
      out.grad_evals += res.grad_evals;
    }
    return out;
  };
}

}  // namespace stocat
