#include "stocat/inner_solvers.hpp"

#include <cmath>

namespace stocat {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Ista:
      return "ista";
    case SolverKind::ProxSgd:
      return "prox-sgd";
    case SolverKind::Svrg:
      return "svrg";
    case SolverKind::Saga:
      return "saga";
  }
  return "?";
}

double default_step(SolverKind kind, const AuxObjective& H) {
  const double L = H.smoothness();
  if (kind == SolverKind::Svrg || kind == SolverKind::Saga) return 1.0 / (3.0 * L);
  return 1.0 / L;
}

namespace {

class Averager {
 public:
  Averager(Averaging mode, double rho, long budget, const Vector& z0)
      : mode_(mode), rho_(std::min(1.0, rho)), budget_(budget), zhat_(z0) {}

  void push(long t, const Vector& z) {
    switch (mode_) {
      case Averaging::Off:
        break;
      case Averaging::Exponential:
        zhat_ = (1.0 - rho_) * zhat_ + rho_ * z;
        break;
      case Averaging::UniformTail:
        if (t > budget_ / 2) {
          ++count_;
          zhat_ += (z - zhat_) / static_cast<double>(count_);
        }
        break;
    }
  }

  const Vector& current(const Vector& z) const {
    if (mode_ == Averaging::Off || (mode_ == Averaging::UniformTail && count_ == 0)) return z;
    return zhat_;
  }

 private:
  Averaging mode_;
  double rho_;
  long budget_;
  long count_ = 0;
  Vector zhat_;
};

void check_config(const InnerConfig& cfg, const Vector& x0, const AuxObjective& H) {
  if (cfg.budget < 1) throw std::invalid_argument("inner budget must be >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("inner batch must be >= 1");
  if (cfg.step < 0.0) throw std::invalid_argument("inner step must be positive");
  if (!(cfg.step_scale > 0.0)) throw std::invalid_argument("inner step scale must be positive");
  if (x0.size() != H.p()) throw std::invalid_argument("dimension mismatch for inner start");
}

double resolve_step(SolverKind kind, const AuxObjective& H, const InnerConfig& cfg) {
  return (cfg.step > 0.0 ? cfg.step : default_step(kind, H)) * cfg.step_scale;
}

void check_finite(const Vector& z, long t) {
  if (!z.allFinite())
    throw DivergenceError("non-finite iterate at inner step " + std::to_string(t));
}

void draw_indices(Index n, int batch, Rng& rng, std::vector<Index>& out) {
  std::uniform_int_distribution<Index> pick(0, n - 1);
  out.resize(static_cast<std::size_t>(batch));
  for (auto& i : out) i = pick(rng);
}

/// Shared prox-step loop: z_t = prox_{step psi}[z_{t-1} - step g_t].
template <class Estimate>
InnerReport prox_loop(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                      double step, Estimate&& estimate) {
  InnerReport rep;
  Vector z = x0;
  Vector g(H.p());
  Averager avg(cfg.averaging, step * H.strong_convexity(), cfg.budget, x0);
  for (long t = 1; t <= cfg.budget; ++t) {
    rep.grad_evals += estimate(z, t, g);
    z = prox(H.reg(), z - step * g, step);
    check_finite(z, t);
    avg.push(t, z);
    if (cfg.trace_every > 0 && t % cfg.trace_every == 0)
      rep.objective_trace.push_back(H.value(avg.current(z)));
  }
  rep.steps = cfg.budget;
  rep.x_out = avg.current(z);
  rep.model_center = std::move(z);
  return rep;
}

}  // namespace

InnerReport ista_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg) {
  check_config(cfg, x0, H);
  const double step = resolve_step(SolverKind::Ista, H, cfg);
  InnerConfig plain = cfg;
  plain.averaging = Averaging::Off;
  return prox_loop(H, x0, plain, step, [&](const Vector& z, long, Vector& g) {
    g = H.smooth_gradient(z);
    return static_cast<long>(H.n());
  });
}

InnerReport prox_sgd_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                           const Perturbation& perturb, Rng& rng) {
  check_config(cfg, x0, H);
  perturb.validate();
  const double step = resolve_step(SolverKind::ProxSgd, H, cfg);
  std::vector<Index> idx;
  return prox_loop(H, x0, cfg, step, [&](const Vector& z, long, Vector& g) {
    draw_indices(H.n(), cfg.batch, rng, idx);
    g = gradient_at_indices(H.base(), z, idx, perturb, rng);
    H.add_shift(z, g);
    return static_cast<long>(cfg.batch);
  });
}

InnerReport svrg_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                       const Perturbation& perturb, Rng& rng) {
  check_config(cfg, x0, H);
  perturb.validate();
  const double step = resolve_step(SolverKind::Svrg, H, cfg);
  const long n = static_cast<long>(H.n());
  const long refresh =
      cfg.svrg_refresh > 0 ? cfg.svrg_refresh : std::max(1L, (n + cfg.batch - 1) / cfg.batch);
  SvrgEstimator est(H, perturb);
  std::vector<Index> idx;
  return prox_loop(H, x0, cfg, step, [&](const Vector& z, long t, Vector& g) {
    long evals = 0;
    if ((t - 1) % refresh == 0) {
      est.refresh(z, rng);
      evals += n;
    }
    draw_indices(H.n(), cfg.batch, rng, idx);
    est.estimate(z, idx, rng, g);
    return evals + cfg.batch;
  });
}

InnerReport saga_solve(const AuxObjective& H, const Vector& x0, const InnerConfig& cfg,
                       const Perturbation& perturb, Rng& rng) {
  check_config(cfg, x0, H);
  perturb.validate();
  const double step = resolve_step(SolverKind::Saga, H, cfg);
  SagaTable table(H, perturb);
  table.initialize(x0, rng);
  std::vector<Index> idx;
  InnerReport rep = prox_loop(H, x0, cfg, step, [&](const Vector& z, long, Vector& g) {
    draw_indices(H.n(), cfg.batch, rng, idx);
    table.estimate(z, idx, rng, g);
    return static_cast<long>(cfg.batch);
  });
  rep.grad_evals += static_cast<long>(H.n());
  return rep;
}

InnerReport inner_solve(SolverKind kind, const AuxObjective& H, const Vector& x0,
                        const InnerConfig& cfg, const Perturbation& perturb, Rng& rng) {
  switch (kind) {
    case SolverKind::Ista:
      return ista_solve(H, x0, cfg);
    case SolverKind::ProxSgd:
      return prox_sgd_solve(H, x0, cfg, perturb, rng);
    case SolverKind::Svrg:
      return svrg_solve(H, x0, cfg, perturb, rng);
    case SolverKind::Saga:
      return saga_solve(H, x0, cfg, perturb, rng);
  }
  throw std::invalid_argument("unknown solver kind");
}

SolverContract mk_contract(SolverKind kind, const Problem& problem, double kappa, int batch,
                           double sigma2) {
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be nonnegative");
  const double L_tot = problem.smoothness() + kappa;
  const double strong = problem.mu() + kappa;
  SolverContract c;
  c.B = 1.0 / L_tot;
  switch (kind) {
    case SolverKind::Ista:
      c.C = 1.0;
      c.tau = strong / L_tot;
      c.sigma2 = 0.0;
      break;
    case SolverKind::ProxSgd:
      c.C = 1.0;
      c.tau = std::min(0.5, strong / L_tot);
      c.sigma2 = sigma2 / batch;
      break;
    case SolverKind::Svrg:
    case SolverKind::Saga:
      c.C = 8.0;
      c.tau = 1.0 / static_cast<double>(problem.n());
      c.sigma2 = sigma2 / batch;
      break;
    default:
      throw std::invalid_argument("unknown solver kind");
  }
  if (!(c.tau > 0.0)) throw std::invalid_argument("contract needs mu + kappa > 0");
  return c;
}

// --- SVRG ------------------------------------------------------------------

SvrgEstimator::SvrgEstimator(const AuxObjective& H, Perturbation perturb)
    : H_(&H), perturb_(perturb), tmp_(H.p()) {
  perturb_.validate();
}

void SvrgEstimator::refresh(const Vector& anchor, Rng& rng) {
  const Problem& base = H_->base();
  const auto& a = base.data().features;
  anchor_ = anchor;
  anchor_mean_.setZero(base.p());
  for (Index i = 0; i < base.n(); ++i) {
    const double s = base.example_scale(i, anchor_);
    if (perturb_.active()) {
      tmp_.noalias() = s * a.row(i).transpose();
      dropout_inplace(tmp_, perturb_.dropout, rng);
      anchor_mean_ += tmp_;
    } else {
      anchor_mean_.noalias() += s * a.row(i).transpose();
    }
  }
  anchor_mean_ /= static_cast<double>(base.n());
}

void SvrgEstimator::estimate(const Vector& z, std::span<const Index> indices, Rng& rng,
                             Vector& out) {
  if (anchor_.size() == 0) throw std::logic_error("SVRG estimator used before refresh");
  const Problem& base = H_->base();
  const auto& a = base.data().features;
  out.setZero(base.p());
  for (Index i : indices) {
    const double sz = base.example_scale(i, z);
    const double sa = base.example_scale(i, anchor_);
    if (perturb_.active()) {
      tmp_.noalias() = sz * a.row(i).transpose();
      dropout_inplace(tmp_, perturb_.dropout, rng);
      out += tmp_;
      tmp_.noalias() = sa * a.row(i).transpose();
      dropout_inplace(tmp_, perturb_.dropout, rng);
      out -= tmp_;
    } else {
      out.noalias() += (sz - sa) * a.row(i).transpose();
    }
  }
  out /= static_cast<double>(indices.size());
  out += anchor_mean_;
  out.noalias() += base.mu() * z;
  H_->add_shift(z, out);
}

// --- SAGA ------------------------------------------------------------------

SagaTable::SagaTable(const AuxObjective& H, Perturbation perturb) : H_(&H), perturb_(perturb) {
  perturb_.validate();
}

void SagaTable::initialize(const Vector& x, Rng& rng) {
  const Problem& base = H_->base();
  const auto& a = base.data().features;
  table_.resize(base.n(), base.p());
  for (Index i = 0; i < base.n(); ++i) {
    table_.row(i) = base.example_scale(i, x) * a.row(i);
    if (perturb_.active()) {
      Eigen::Map<Vector> row(table_.row(i).data(), base.p());
      dropout_inplace(row, perturb_.dropout, rng);
    }
  }
  mean_ = table_.colwise().mean().transpose();
  updates_since_sync_ = 0;
}

void SagaTable::estimate(const Vector& z, std::span<const Index> indices, Rng& rng,
                         Vector& out) {
  if (table_.rows() == 0) throw std::logic_error("SAGA table used before initialization");
  const Problem& base = H_->base();
  const auto& a = base.data().features;
  const auto b = static_cast<Index>(indices.size());
  fresh_.resize(b, base.p());
  out.setZero(base.p());
  for (Index k = 0; k < b; ++k) {
    const Index i = indices[static_cast<std::size_t>(k)];
    fresh_.row(k) = base.example_scale(i, z) * a.row(i);
    if (perturb_.active()) {
      Eigen::Map<Vector> row(fresh_.row(k).data(), base.p());
      dropout_inplace(row, perturb_.dropout, rng);
    }
    out += (fresh_.row(k) - table_.row(i)).transpose();
  }
  out /= static_cast<double>(b);
  out += mean_;
  out.noalias() += base.mu() * z;
  H_->add_shift(z, out);

  const double inv_n = 1.0 / static_cast<double>(base.n());
  for (Index k = 0; k < b; ++k) {
    const Index i = indices[static_cast<std::size_t>(k)];
    mean_ += inv_n * (fresh_.row(k) - table_.row(i)).transpose();
    table_.row(i) = fresh_.row(k);
  }
  updates_since_sync_ += b;
  if (updates_since_sync_ >= base.n()) {
    mean_ = table_.colwise().mean().transpose();
    updates_since_sync_ = 0;
  }
}

double SagaTable::mean_drift() const {
  const Vector exact = table_.colwise().mean().transpose();
  return (exact - mean_).cwiseAbs().maxCoeff();
}

}  // namespace stocat
