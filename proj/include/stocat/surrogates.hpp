#pragma once

#include "stocat/problem.hpp"

namespace stocat {

/// H(x) = F(x) + kappa/2 |x - center|^2. With kappa = 0 this is F itself,
/// which is how the unaccelerated baselines reuse the inner solvers.
class AuxObjective {
 public:
  AuxObjective(const Problem& base, double kappa, Vector center);

  const Problem& base() const { return *base_; }
  double kappa() const { return kappa_; }
  const Vector& center() const { return center_; }
  const Regularizer& reg() const { return base_->reg(); }
  Index n() const { return base_->n(); }
  Index p() const { return base_->p(); }

  /// L + mu + kappa.
  double smoothness() const { return base_->smoothness() + kappa_; }
  /// mu + kappa.
  double strong_convexity() const { return base_->mu() + kappa_; }

  double smooth_value(const Vector& x) const;
  double value(const Vector& x) const;
  Vector smooth_gradient(const Vector& x) const;
  /// Adds kappa (x - center) to a gradient of the base smooth part.
  void add_shift(const Vector& x, Vector& g) const;

 private:
  const Problem* base_;
  double kappa_;
  Vector center_;
};

/// Proximal-point surrogate at y. Throws unless kappa > 0 and dim(y) = p.
AuxObjective build_aux(const Problem& problem, double kappa, const Vector& y);

/// The objective F seen as an auxiliary problem with kappa = 0.
AuxObjective unshifted(const Problem& problem);

/// Strongly convex quadratic model (curvature/2)|x - center|^2 + psi(x),
/// stored without its constant offset.
class QuadraticModel {
 public:
  QuadraticModel(Vector center, double curvature, Regularizer reg, Vector anchor);

  const Vector& center() const { return center_; }
  double curvature() const { return curvature_; }
  const Regularizer& reg() const { return reg_; }
  const Vector& anchor() const { return anchor_; }

  Vector minimizer() const { return prox(reg_, center_, 1.0 / curvature_); }
  /// Model value up to the dropped constant.
  double value(const Vector& x) const;

 private:
  Vector center_;
  double curvature_;
  Regularizer reg_;
  Vector anchor_;
};

/// prox_{psi/L_eff}[y - grad f(y) / L_eff] with the exact gradient.
Vector grad_model_min(const Problem& problem, const Vector& y, double L_eff);

/// Model f(y) + g^T (x - y) + (kappa+mu)/2 |x - y|^2 + psi(x).
QuadraticModel stoch_grad_model_min(const Vector& g, const Vector& y, double kappa,
                                    double mu, const Regularizer& reg);

/// Full value f(y) + g^T (x - y) + c/2 |x - y|^2 + psi(x) of a gradient model,
/// including the offset the QuadraticModel drops.
double gradient_model_value(const Problem& problem, const Vector& y, const Vector& g,
                            double curvature, const Vector& x);

struct InnerReport;

/// Quadratic model kept by a prox-type inner solver: center z_T, curvature
/// mu + kappa, psi already folded in. Throws if the solver took no steps.
QuadraticModel solver_model(const InnerReport& report, double mu, double kappa,
                            const Vector& anchor);

}  // namespace stocat
