#include "stocat/surrogates.hpp"

#include "stocat/inner_solvers.hpp"

namespace stocat {

AuxObjective::AuxObjective(const Problem& base, double kappa, Vector center)
    : base_(&base), kappa_(kappa), center_(std::move(center)) {
  if (!(kappa_ >= 0.0)) throw std::invalid_argument("kappa must be nonnegative");
  if (center_.size() != base.p()) throw std::invalid_argument("dimension mismatch for prox center");
}

double AuxObjective::smooth_value(const Vector& x) const {
  double v = base_->smooth_value(x);
  if (kappa_ > 0.0) v += 0.5 * kappa_ * (x - center_).squaredNorm();
  return v;
}

double AuxObjective::value(const Vector& x) const { return smooth_value(x) + reg().value(x); }

Vector AuxObjective::smooth_gradient(const Vector& x) const {
  Vector g = base_->gradient(x);
  add_shift(x, g);
  return g;
}

void AuxObjective::add_shift(const Vector& x, Vector& g) const {
  if (kappa_ > 0.0) g.noalias() += kappa_ * (x - center_);
}

AuxObjective build_aux(const Problem& problem, double kappa, const Vector& y) {
  if (!(kappa > 0.0)) throw std::invalid_argument("proximal surrogate needs kappa > 0");
  return AuxObjective(problem, kappa, y);
}

AuxObjective unshifted(const Problem& problem) {
  return AuxObjective(problem, 0.0, Vector::Zero(problem.p()));
}

QuadraticModel::QuadraticModel(Vector center, double curvature, Regularizer reg, Vector anchor)
    : center_(std::move(center)), curvature_(curvature), reg_(reg), anchor_(std::move(anchor)) {
  if (!(curvature_ > 0.0)) throw std::invalid_argument("model curvature must be positive");
}

double QuadraticModel::value(const Vector& x) const {
  return 0.5 * curvature_ * (x - center_).squaredNorm() + reg_.value(x);
}

Vector grad_model_min(const Problem& problem, const Vector& y, double L_eff) {
  if (!(L_eff > 0.0)) throw std::invalid_argument("model curvature must be positive");
  const Vector g = problem.gradient(y);
  return prox(problem.reg(), y - g / L_eff, 1.0 / L_eff);
}

QuadraticModel stoch_grad_model_min(const Vector& g, const Vector& y, double kappa, double mu,
                                    const Regularizer& reg) {
  const double c = kappa + mu;
  if (!(c > 0.0)) throw std::invalid_argument("model curvature kappa + mu must be positive");
  if (g.size() != y.size()) throw std::invalid_argument("dimension mismatch");
  return QuadraticModel(y - g / c, c, reg, y);
}

double gradient_model_value(const Problem& problem, const Vector& y, const Vector& g,
                            double curvature, const Vector& x) {
  const Vector d = x - y;
  return problem.smooth_value(y) + g.dot(d) + 0.5 * curvature * d.squaredNorm() +
         problem.reg().value(x);
}

QuadraticModel solver_model(const InnerReport& report, double mu, double kappa,
                            const Vector& anchor) {
  if (report.steps < 1) throw std::invalid_argument("solver model needs at least one inner step");
  return QuadraticModel(report.model_center, mu + kappa, Regularizer::none(), anchor);
}

}  // namespace stocat
