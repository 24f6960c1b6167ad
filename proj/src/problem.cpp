#include "stocat/problem.hpp"

#include <cmath>
#include <sstream>

namespace stocat {

std::string to_string(LossKind kind) {
  return kind == LossKind::Logistic ? "logistic" : "sqhinge";
}

double loss_smoothness(LossKind kind) {
  return kind == LossKind::Logistic ? 0.25 : 1.0;
}

double loss_value(double u, LossKind kind) {
  if (kind == LossKind::Logistic) {
    if (u >= 0.0) return std::log1p(std::exp(-u));
    return -u + std::log1p(std::exp(u));
  }
  const double slack = std::max(0.0, 1.0 - u);
  return 0.5 * slack * slack;
}

double loss_grad(double u, LossKind kind) {
  if (kind == LossKind::Logistic) {
    if (u >= 0.0) {
      const double e = std::exp(-u);
      return -e / (1.0 + e);
    }
    return -1.0 / (1.0 + std::exp(u));
  }
  return -std::max(0.0, 1.0 - u);
}

// --- Regularizer -----------------------------------------------------------

Regularizer Regularizer::l1(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("l1 weight must be a finite nonnegative number");
  Regularizer r;
  r.tag_ = Tag::L1;
  r.lambda_ = lambda;
  return r;
}

double Regularizer::value(const Vector& x) const {
  return lambda_ == 0.0 ? 0.0 : lambda_ * x.lpNorm<1>();
}

std::string Regularizer::describe() const {
  if (tag_ == Tag::None) return "none";
  std::ostringstream os;
  os.precision(17);
  os << "l1:" << lambda_;
  return os.str();
}

Vector prox(const Regularizer& reg, const Vector& v, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("prox step must be positive");
  if (reg.is_zero()) return v;
  const double t = step * reg.lambda();
  return v.unaryExpr([t](double vi) {
    if (vi > t) return vi - t;
    if (vi < -t) return vi + t;
    return 0.0;
  });
}

// --- Dataset ---------------------------------------------------------------

void Dataset::validate() const {
  if (n() < 1 || p() < 1) throw std::invalid_argument("dataset must have n >= 1 and p >= 1");
  if (labels.size() != n()) throw std::invalid_argument("label count differs from row count");
  for (Index i = 0; i < n(); ++i) {
    if (labels[i] != 1.0 && labels[i] != -1.0)
      throw std::invalid_argument("labels must be +1 or -1");
    if (features.row(i).norm() > 1.0 + 1e-9)
      throw std::invalid_argument("rows must have norm at most 1");
  }
  if (!features.allFinite()) throw std::invalid_argument("features must be finite");
}

void normalize_rows(RowMatrix& features) {
  for (Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    if (norm > 0.0) features.row(i) /= norm;
  }
}

Dataset synth_generate(Index n, Index p, std::uint64_t seed, double separability) {
  if (n < 1 || p < 1) throw std::invalid_argument("synth_generate needs n >= 1 and p >= 1");
  if (!(separability >= 0.0 && separability <= 1.0))
    throw std::invalid_argument("separability must lie in [0, 1]");
  Rng rng(derive_seed(seed, 0x5eed));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vector w(p);
  for (Index j = 0; j < p; ++j) w[j] = gauss(rng);

  Dataset ds;
  ds.features.resize(n, p);
  ds.labels.resize(n);
  const double flip = 0.5 * (1.0 - separability);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) ds.features(i, j) = gauss(rng);
    const double side = ds.features.row(i).dot(w);
    double label = side >= 0.0 ? 1.0 : -1.0;
    if (unif(rng) < flip) label = -label;
    ds.labels[i] = label;
  }
  normalize_rows(ds.features);
  return ds;
}

// --- Problem ---------------------------------------------------------------

Problem::Problem(std::shared_ptr<const Dataset> data, LossKind loss, double mu,
                 Regularizer reg)
    : data_(std::move(data)), loss_(loss), mu_(mu), reg_(reg) {
  if (!data_) throw std::invalid_argument("problem needs a dataset");
  if (!(mu_ >= 0.0) || !std::isfinite(mu_))
    throw std::invalid_argument("mu must be a finite nonnegative number");
}

double Problem::loss_smoothness() const { return stocat::loss_smoothness(loss_); }

void Problem::check_dim(const Vector& x) const {
  if (x.size() != p())
    throw std::invalid_argument("dimension mismatch: expected " + std::to_string(p()) +
                                ", got " + std::to_string(x.size()));
}

double Problem::example_scale(Index i, const Vector& x) const {
  const double b = data_->labels[i];
  return loss_grad(b * data_->features.row(i).dot(x), loss_) * b;
}

double Problem::smooth_value(const Vector& x) const {
  check_dim(x);
  const Vector margins = (data_->features * x).cwiseProduct(data_->labels);
  double sum = 0.0;
  for (Index i = 0; i < margins.size(); ++i) sum += loss_value(margins[i], loss_);
  return sum / static_cast<double>(n()) + 0.5 * mu_ * x.squaredNorm();
}

double Problem::value(const Vector& x) const { return smooth_value(x) + reg_.value(x); }

Vector Problem::gradient(const Vector& x) const {
  check_dim(x);
  Vector scales = (data_->features * x).cwiseProduct(data_->labels);
  for (Index i = 0; i < scales.size(); ++i)
    scales[i] = loss_grad(scales[i], loss_) * data_->labels[i];
  Vector g = data_->features.transpose() * scales;
  g /= static_cast<double>(n());
  g += mu_ * x;
  return g;
}

double full_objective(const Problem& problem, const Vector& x) { return problem.value(x); }
Vector full_gradient(const Problem& problem, const Vector& x) { return problem.gradient(x); }

// --- Stochastic oracle -----------------------------------------------------

void Perturbation::validate() const {
  if (!(dropout >= 0.0 && dropout < 1.0))
    throw std::invalid_argument("dropout must be in [0,1)");
}

void dropout_inplace(Eigen::Ref<Vector> g, double delta, Rng& rng) {
  if (!(delta >= 0.0 && delta < 1.0)) throw std::invalid_argument("dropout must be in [0,1)");
  if (delta == 0.0) return;
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(delta, 64));
  const double keep = 1.0 / (1.0 - delta);
  for (Index j = 0; j < g.size(); ++j) g[j] = rng() < threshold ? 0.0 : g[j] * keep;
}

Vector dropout_perturb(const Vector& g, double delta, Rng& rng) {
  Vector out = g;
  dropout_inplace(out, delta, rng);
  return out;
}

Vector gradient_at_indices(const Problem& problem, const Vector& x,
                           std::span<const Index> indices,
                           const Perturbation& perturb, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("gradient needs at least one index");
  if (x.size() != problem.p()) throw std::invalid_argument("dimension mismatch");
  const auto& a = problem.data().features;
  Vector acc = Vector::Zero(problem.p());
  Vector tmp(problem.p());
  for (Index i : indices) {
    const double s = problem.example_scale(i, x);
    if (perturb.active()) {
      tmp.noalias() = s * a.row(i).transpose();
      dropout_inplace(tmp, perturb.dropout, rng);
      acc += tmp;
    } else {
      acc.noalias() += s * a.row(i).transpose();
    }
  }
  acc /= static_cast<double>(indices.size());
  acc += problem.mu() * x;
  return acc;
}

GradientSample sample_gradient(const Problem& problem, const Vector& x, int batch,
                               const Perturbation& perturb, Rng& rng) {
  if (batch < 1) throw std::invalid_argument("batch must be positive");
  perturb.validate();
  std::uniform_int_distribution<Index> pick(0, problem.n() - 1);
  GradientSample out;
  out.batch = batch;
  out.indices.resize(static_cast<std::size_t>(batch));
  for (auto& i : out.indices) i = pick(rng);
  out.g = gradient_at_indices(problem, x, out.indices, perturb, rng);
  return out;
}

double estimate_sigma2(const Problem& problem, const Vector& x, int batch,
                       const Perturbation& perturb, int draws, Rng& rng) {
  if (draws < 2) throw std::invalid_argument("need at least two draws");
  Vector mean = Vector::Zero(problem.p());
  Vector m2 = Vector::Zero(problem.p());
  for (int t = 1; t <= draws; ++t) {
    const Vector g = sample_gradient(problem, x, batch, perturb, rng).g;
    const Vector d = g - mean;
    mean += d / static_cast<double>(t);
    m2 += d.cwiseProduct(g - mean);
  }
  return m2.sum() / static_cast<double>(draws - 1);
}

double perturbation_variance(const Problem& problem, const Vector& x,
                             const Perturbation& perturb) {
  perturb.validate();
  if (!perturb.active()) return 0.0;
  const auto& a = problem.data().features;
  double sum = 0.0;
  for (Index i = 0; i < problem.n(); ++i) {
    const double s = problem.example_scale(i, x);
    sum += s * s * a.row(i).squaredNorm();
  }
  const double d = perturb.dropout;
  return d / (1.0 - d) * sum / static_cast<double>(problem.n());
}

}  // namespace stocat
