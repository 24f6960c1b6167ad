#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "stocat/types.hpp"

namespace stocat {

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind { Logistic, SquaredHinge };

std::string to_string(LossKind kind);

/// Lipschitz constant of the loss derivative: 0.25 (logistic), 1 (squared
/// hinge). Valid as the smoothness of the data term when rows have unit norm.
double loss_smoothness(LossKind kind);

/// phi(u). The logistic branch is stable for |u| well past 1e3.
double loss_value(double u, LossKind kind);

/// phi'(u).
double loss_grad(double u, LossKind kind);

// ---------------------------------------------------------------------------
// Regularizer
// ---------------------------------------------------------------------------

class Regularizer {
 public:
  enum class Tag { None, L1 };

  Regularizer() = default;
  static Regularizer none() { return {}; }
  static Regularizer l1(double lambda);

  Tag tag() const { return tag_; }
  double lambda() const { return lambda_; }
  /// True when psi is identically zero (None, or L1 with lambda = 0).
  bool is_zero() const { return lambda_ == 0.0; }

  double value(const Vector& x) const;
  std::string describe() const;

 private:
  Tag tag_ = Tag::None;
  double lambda_ = 0.0;
};

/// argmin_x 1/2 |v - x|^2 + step * psi(x). Soft-thresholding at step*lambda
/// for L1, identity for None. Throws std::invalid_argument if step <= 0.
Vector prox(const Regularizer& reg, const Vector& v, double step);

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

/// Immutable training set: one example per row, labels in {-1, +1}.
struct Dataset {
  RowMatrix features;
  Vector labels;

  Index n() const { return features.rows(); }
  Index p() const { return features.cols(); }

  /// Throws std::invalid_argument if any invariant is broken.
  void validate() const;
};

/// Scales every nonzero row to unit l2 norm.
void normalize_rows(RowMatrix& features);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& msg);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads `label idx:val ...` lines (1-based indices). Rows are normalized.
Dataset parse_libsvm(std::istream& in, const std::string& source = "<stream>");
Dataset load_libsvm(const std::filesystem::path& path);

/// Gaussian features, labels from a planted hyperplane. A fraction
/// (1 - separability) / 2 of the labels is flipped at random, so 0.9 flips 5%.
/// Rows are normalized. Deterministic in (n, p, seed, separability).
Dataset synth_generate(Index n, Index p, std::uint64_t seed,
                       double separability = 0.9);

// ---------------------------------------------------------------------------
// Composite objective F(x) = (1/n) sum phi(b_i a_i^T x) + mu/2 |x|^2 + psi(x)
// ---------------------------------------------------------------------------

class Problem {
 public:
  Problem(std::shared_ptr<const Dataset> data, LossKind loss, double mu,
          Regularizer reg = Regularizer::none());

  const Dataset& data() const { return *data_; }
  const std::shared_ptr<const Dataset>& data_ptr() const { return data_; }
  LossKind loss() const { return loss_; }
  double mu() const { return mu_; }
  const Regularizer& reg() const { return reg_; }
  Index n() const { return data_->n(); }
  Index p() const { return data_->p(); }

  /// L, the smoothness of the loss part.
  double loss_smoothness() const;
  /// L + mu, the smoothness of f.
  double smoothness() const { return loss_smoothness() + mu_; }

  /// phi'(b_i a_i^T x) b_i, so the loss-part gradient of example i is
  /// example_scale(i, x) * a_i.
  double example_scale(Index i, const Vector& x) const;

  /// f(x), smooth part only.
  double smooth_value(const Vector& x) const;
  /// F(x) = f(x) + psi(x).
  double value(const Vector& x) const;
  /// Exact gradient of f.
  Vector gradient(const Vector& x) const;

 private:
  void check_dim(const Vector& x) const;

  std::shared_ptr<const Dataset> data_;
  LossKind loss_;
  double mu_;
  Regularizer reg_;
};

double full_objective(const Problem& problem, const Vector& x);
Vector full_gradient(const Problem& problem, const Vector& x);

// ---------------------------------------------------------------------------
// Stochastic oracle
// ---------------------------------------------------------------------------

struct Perturbation {
  double dropout = 0.0;

  /// Throws std::invalid_argument unless 0 <= dropout < 1.
  void validate() const;
  bool active() const { return dropout > 0.0; }
};

struct GradientSample {
  Vector g;
  int batch = 0;
  std::vector<Index> indices;
};

/// Zeroes each coordinate with probability delta, scales the rest by
/// 1/(1-delta). Throws if delta is outside [0, 1).
Vector dropout_perturb(const Vector& g, double delta, Rng& rng);
void dropout_inplace(Eigen::Ref<Vector> g, double delta, Rng& rng);

/// `batch` indices drawn uniformly with replacement. Each per-example
/// loss gradient is perturbed, the batch is averaged, then mu*x is added.
GradientSample sample_gradient(const Problem& problem, const Vector& x, int batch,
                               const Perturbation& perturb, Rng& rng);

/// Same estimator on a caller-chosen index set (full sweeps, forced indices).
Vector gradient_at_indices(const Problem& problem, const Vector& x,
                           std::span<const Index> indices,
                           const Perturbation& perturb, Rng& rng);

/// Empirical E|g - mean(g)|^2 of sample_gradient at `x`, over `draws` draws.
double estimate_sigma2(const Problem& problem, const Vector& x, int batch,
                       const Perturbation& perturb, int draws, Rng& rng);

/// Variance contributed by the perturbation alone, averaged over examples:
/// delta/(1-delta) * (1/n) sum_i |loss gradient of example i at x|^2.
/// This is the residual noise of a variance-reduced estimator.
double perturbation_variance(const Problem& problem, const Vector& x,
                             const Perturbation& perturb);

}  // namespace stocat
