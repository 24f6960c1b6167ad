#include <doctest.h>

#include "stocat/accelerators.hpp"
#include "test_support.hpp"

using namespace stocat;
using support::make_problem;
using support::random_vector;

namespace {

AccelConfig apg_config(const Problem& pb, double kappa, int iters) {
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = iters;
  cfg.record_iterates = true;
  (void)pb;
  return cfg;
}

// Exact prox with optional forced suboptimality: x = x* + t d with
// H(x) - H* = extra, found by bisection on t.
InnerSolverFn exact_inner(std::function<double()> extra = {}) {
  return [extra](const AuxObjective& H, const Vector&, const InnerConfig&, Rng& rng) {
    const auto star = support::exact_minimize(H.base(), H.kappa(), H.center());
    InnerReport rep;
    rep.x_out = star.x;
    rep.steps = 1;
    if (extra) {
      const double target = extra();
      Vector d = random_vector(H.p(), rng);
      d /= d.norm();
      const double hs = H.value(star.x);
      double lo = 0.0, hi = 1.0;
      while (H.value(star.x + hi * d) - hs < target) hi *= 2.0;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (H.value(star.x + mid * d) - hs < target ? lo : hi) = mid;
      }
      rep.x_out = star.x + hi * d;
    }
    rep.model_center = rep.x_out;
    return rep;
  };
}

}  // namespace

TEST_CASE("Algorithm 1 with the gradient model is FISTA") {
  for (int inst = 0; inst < 6; ++inst) {
    const double mu = inst % 2 == 0 ? 0.0 : 1.0 / (10.0 * 80);
    const auto reg = inst < 3 ? Regularizer::none() : Regularizer::l1(0.01);
    const auto pb = make_problem(80, 6, 100 + inst, mu, LossKind::Logistic, reg);
    const double Lc = pb.smoothness();
    auto cfg = apg_config(pb, Lc - mu, 100);
    Rng rng(inst), xr(inst + 50);
    cfg.x0 = random_vector(6, xr);
    const auto tr = run_algorithm1(pb, cfg, gradient_model_builder(pb, Lc), rng);
    const auto ref = support::fista_reference(pb, Lc, 100, cfg.x0);
    REQUIRE(tr.xs.size() == ref.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, (tr.xs[k] - ref[k]).norm());
    CAPTURE(inst);
    CHECK(worst <= 1e-12);
  }
}

TEST_CASE("Algorithm 1 from a stationary point stays there") {
  const auto pb = make_problem(40, 4, 7, 0.01);
  const auto star = support::newton_minimize(pb);
  auto cfg = apg_config(pb, pb.smoothness() - pb.mu(), 1);
  cfg.x0 = star.x;
  Rng rng(1);
  const auto tr = run_algorithm1(pb, cfg, gradient_model_builder(pb, pb.smoothness()), rng);
  CHECK((tr.x_final - star.x).norm() <= 1e-13);
  CHECK(tr.records.size() == 2);
}

TEST_CASE("Algorithm 1 deterministic envelopes") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    SUBCASE("convex") {
      const auto pb = make_problem(100, 8, seed, 0.0, LossKind::Logistic, Regularizer::none(), 0.6);
      const auto star = support::newton_minimize(pb);
      const double kappa = pb.smoothness();
      auto cfg = apg_config(pb, kappa, 150);
      Rng rng(seed);
      const auto tr = run_algorithm1(pb, cfg, gradient_model_builder(pb, kappa), rng);
      const double R2 = star.x.squaredNorm();
      for (const auto& r : tr.records) {
        if (r.k == 0) continue;
        REQUIRE(r.objective - star.f <= 2 * kappa * R2 / ((r.k + 1.0) * (r.k + 1.0)) + 1e-14);
      }
    }
    SUBCASE("strongly convex") {
      const double mu = 1.0 / (10 * 100);
      const auto pb = make_problem(100, 8, seed, mu);
      const auto star = support::newton_minimize(pb);
      const double kappa = pb.loss_smoothness();
      const double sq = std::sqrt(q_of(mu, kappa));
      auto cfg = apg_config(pb, kappa, 150);
      Rng rng(seed);
      const auto tr = run_algorithm1(pb, cfg, gradient_model_builder(pb, kappa + mu), rng);
      const double F0 = tr.records.front().objective - star.f;
      for (const auto& r : tr.records)
        REQUIRE(r.objective - star.f <= 2 * std::pow(1 - sq, r.k) * F0 + 1e-14);
    }
  }
}

TEST_CASE("trace invariants: momentum algebra, counters, reproducibility") {
  const auto pb = make_problem(60, 5, 9, 1.0 / 600);
  const double kappa = pb.loss_smoothness();
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = 80;
  Rng r1(5), r2(5);
  const auto b = stochastic_model_builder(pb, kappa, 4, Perturbation{0.1});
  const auto t1 = run_algorithm1(pb, cfg, b, r1);
  const auto t2 = run_algorithm1(pb, cfg, b, r2);
  REQUIRE(t1.records.size() == 81);
  const double q = q_of(pb.mu(), kappa);
  for (std::size_t i = 1; i < t1.records.size(); ++i) {
    const auto& r = t1.records[i];
    const auto& prev = t1.records[i - 1];
    CHECK(r.alpha > 0.0);
    CHECK(r.alpha < 1.0);
    CHECK(r.beta >= 0.0);
    CHECK(r.beta < 1.0);
    CHECK(std::abs(r.alpha * r.alpha - (1 - r.alpha) * prev.alpha * prev.alpha - q * r.alpha) <=
          1e-12);
    CHECK(r.grad_evals == prev.grad_evals + 4);
    CHECK(r.epochs == doctest::Approx(r.grad_evals / 60.0).epsilon(1e-12));
    CHECK(r.k == prev.k + 1);
    CHECK(r.objective == t2.records[i].objective);
  }
  CHECK(t1.x_final == t2.x_final);
}

TEST_CASE("record_every and epoch budget") {
  const auto pb = make_problem(50, 4, 10, 0.002);
  AccelConfig cfg;
  cfg.kappa = pb.loss_smoothness();
  cfg.outer_iters = 1000;
  cfg.record_every = 50;
  cfg.max_epochs = 7.5;
  Rng rng(1);
  const auto tr = run_algorithm1(pb, cfg, stochastic_model_builder(pb, cfg.kappa, 5, {}), rng);
  // 5 evals per iteration, 10 per epoch: budget reached at k = 75.
  CHECK(tr.records.back().k == 75);
  CHECK(tr.records.back().epochs == doctest::Approx(7.5));
  CHECK(tr.records.size() == 3);
  CHECK(tr.records[1].k == 50);
}

TEST_CASE("Algorithm 1 errors and divergence guard") {
  const auto pb = make_problem(30, 3, 11, 0.01, LossKind::Logistic, Regularizer::l1(0.01));
  AccelConfig cfg;
  cfg.kappa = 0.0;
  Rng rng(1);
  CHECK_THROWS_AS(run_algorithm1(pb, cfg, gradient_model_builder(pb, 1.0), rng), std::invalid_argument);
  cfg.kappa = 0.1;
  cfg.warm_start = WarmStart::PrevY;
  CHECK_THROWS_AS(run_algorithm1(pb, cfg, gradient_model_builder(pb, 1.0), rng), std::invalid_argument);
  cfg.warm_start = WarmStart::PrevX;
  cfg.x0 = Vector::Zero(4);
  CHECK_THROWS_AS(run_algorithm1(pb, cfg, gradient_model_builder(pb, 1.0), rng), std::invalid_argument);

  // A curvature far below L makes the gradient model overshoot.
  const auto smooth = make_problem(30, 3, 11, 0.0, LossKind::SquaredHinge);
  AccelConfig bad;
  bad.kappa = 1e-3;
  bad.outer_iters = 500;
  const auto tr = run_algorithm1(smooth, bad, gradient_model_builder(smooth, 1e-3), rng);
  CHECK(tr.diverged);
  CHECK(tr.message.find("divergence") != std::string::npos);
}

TEST_CASE("accelerated prox-SGD plateau under dropout") {
  const Index n = 200;
  const double mu = 1.0 / (10.0 * n);
  const auto pb = make_problem(n, 10, 12, mu);
  const auto star = support::newton_minimize(pb);
  const Perturbation drop{0.1};
  Rng mr(77);
  const double sigma2 = estimate_sigma2(pb, star.x, 1, drop, 50000, mr);
  const double L = pb.loss_smoothness();
  AccelConfig cfg;
  cfg.kappa = L - mu;
  cfg.outer_iters = 300;
  double plateau = 0.0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(derive_seed(3, s));
    const auto tr = run_algorithm1(pb, cfg, stochastic_model_builder(pb, cfg.kappa, 1, drop), rng);
    for (std::size_t i = tr.records.size() - 20; i < tr.records.size(); ++i)
      plateau += (tr.records[i].objective - star.f) / (20.0 * seeds);
  }
  CHECK(plateau <= 3 * sigma2 / std::sqrt(mu * L));
}

TEST_CASE("plan_inner") {
  AccelConfig cfg;
  cfg.inner.batch = 2;
  auto ic = plan_inner(cfg, 100, 1.0);
  CHECK(ic.batch == 2);
  CHECK(ic.budget == 100);
  ic = plan_inner(cfg, 100, 0.3);
  CHECK(ic.batch == 8);
  CHECK(ic.budget == 84);  // ceil(334 / 4)
  cfg.bias_mode = BiasMode::StepSize;
  ic = plan_inner(cfg, 100, 0.25);
  CHECK(ic.batch == 2);
  CHECK(ic.budget == 400);
  CHECK(ic.step_scale == doctest::Approx(0.25));
  ic = plan_inner(cfg, 100, 1e-6);
  CHECK(ic.budget == 10000);
  cfg.inner_steps = 30;
  cfg.inner_cap = 50;
  CHECK(plan_inner(cfg, 100, 0.1).budget == 50);
}

TEST_CASE("Algorithm 2 with exact proximal steps is the accelerated proximal point method") {
  const double mu = 0.01;
  const auto pb = make_problem(40, 4, 13, mu);
  const double kappa = 0.2;
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = 15;
  cfg.record_iterates = true;
  Rng rng(1);
  const auto tr = run_algorithm2(pb, cfg, exact_inner(), rng);

  // Reference: x_k = prox_{F/kappa}(y_{k-1}), constant momentum.
  const double sq = std::sqrt(mu / (mu + kappa));
  const double beta = (1 - sq) / (1 + sq);
  Vector x = Vector::Zero(4), y = x;
  for (int k = 1; k <= 15; ++k) {
    const Vector xn = support::newton_minimize(pb, 1e-14, 200, kappa, y).x;
    y = xn + beta * (xn - x);
    x = xn;
    CHECK((tr.xs[k] - x).norm() <= 1e-12);
  }

  // A long deterministic inner solve tracks the same trajectory.
  cfg.inner_steps = 3000;
  cfg.inner.averaging = Averaging::Off;
  const auto ista = run_algorithm2(pb, cfg, make_inner_solver(SolverKind::Ista, {}), rng);
  for (int k = 1; k <= 15; ++k) CHECK((ista.xs[k] - tr.xs[k]).norm() <= 1e-9);
}

TEST_CASE("Algorithm 2 bookkeeping") {
  const auto pb = make_problem(50, 4, 14, 0.01, LossKind::Logistic, Regularizer::l1(0.01));
  AccelConfig cfg;
  cfg.kappa = 0.1;
  cfg.outer_iters = 5;
  cfg.contract = mk_contract(SolverKind::ProxSgd, pb, 0.1, 1, 0.5);
  Rng rng(2);
  const auto tr = run_algorithm2(pb, cfg, make_inner_solver(SolverKind::ProxSgd, {}), rng);
  const double q = q_of(0.01, 0.1);
  const double F0 = tr.records[0].objective;
  for (int k = 1; k <= 5; ++k) {
    const auto& r = tr.records[k];
    CHECK(r.tolerance == doctest::Approx(catalyst_eps_schedule(F0, q, k)));
    CHECK(r.eta == doctest::Approx(bias_factor(r.tolerance, cfg.contract)));
    CHECK(r.batch == static_cast<int>(std::ceil(1.0 / r.eta - 1e-12)));
    CHECK(r.grad_evals - tr.records[k - 1].grad_evals == r.inner_budget);
  }
  // Convex problems use the polynomial schedule.
  const auto convex = make_problem(50, 4, 14, 0.0);
  AccelConfig c2;
  c2.kappa = 0.25;
  c2.outer_iters = 3;
  const auto t2 = run_algorithm2(convex, c2, make_inner_solver(SolverKind::Ista, {}), rng);
  CHECK(t2.records[2].tolerance == doctest::Approx(convex_eps_schedule(t2.records[0].objective, 2)));
}

TEST_CASE("Algorithm 2 stays under the inexact envelope") {
  const double mu = 0.01, kappa = 0.2;
  const auto pb = make_problem(40, 4, 15, mu);
  const auto star = support::newton_minimize(pb);
  const double sq = std::sqrt(q_of(mu, kappa));
  const double rho = 1 - sq / 2;
  int j = 0;
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = 40;
  Rng rng(3);
  const auto tr = run_algorithm2(pb, cfg, exact_inner([&] { return std::pow(rho, ++j); }), rng);
  const double F0 = tr.records[0].objective - star.f;
  double sum = 0.0;
  for (int k = 1; k <= 40; ++k) {
    const double eps = std::pow(rho, k);
    sum += std::pow(rho, -k) * (eps + eps / sq);
    const double bound = std::pow(rho, k) * (2 * F0 + 4 * sum);
    CHECK(tr.records[k].objective - star.f <= 2 * bound);
  }
}

TEST_CASE("optimality-gap driver") {
  SUBCASE("variance reduction without noise converges linearly") {
    const Index n = 100;
    const double mu = 1.0 / (100.0 * n);
    const auto pb = make_problem(n, 5, 16, mu);
    const auto star = support::newton_minimize(pb);
    const double kappa = std::max(pb.smoothness() / (5.0 * n) - mu, 0.0);
    REQUIRE(kappa > 0.0);
    AccelConfig cfg;
    cfg.kappa = kappa;
    cfg.outer_iters = 60;
    cfg.inner.averaging = Averaging::Off;
    cfg.contract = mk_contract(SolverKind::Svrg, pb, kappa, 1, 0.0);
    cfg.warm_start = WarmStart::PrevY;
    Rng rng(4);
    const auto tr = run_prop5(pb, cfg, make_inner_solver(SolverKind::Svrg, {}), rng);
    CHECK_FALSE(tr.diverged);
    CHECK(tr.records.back().objective - star.f <= 1e-10);
    for (const auto& r : tr.records)
      if (r.k > 0) CHECK(r.eta == 1.0);
  }
  SUBCASE("kappa at zero falls back to the plain solver") {
    const auto pb = make_problem(50, 4, 17, 0.05);
    AccelConfig cfg;
    cfg.kappa = 0.0;
    cfg.outer_iters = 20;
    cfg.contract = mk_contract(SolverKind::Saga, pb, 0.0, 1, 0.0);
    Rng rng(5);
    const auto tr = run_prop5(pb, cfg, make_inner_solver(SolverKind::Saga, {}), rng);
    CHECK(tr.kappa == 0.0);
    CHECK(tr.records.size() == 21);
    for (std::size_t i = 1; i < tr.records.size(); ++i) CHECK(tr.records[i].alpha == 1.0);
    CHECK(tr.records.back().objective < tr.records.front().objective);
  }
  SUBCASE("needs strong convexity") {
    const auto pb = make_problem(50, 4, 18, 0.0);
    AccelConfig cfg;
    cfg.kappa = 0.1;
    Rng rng(6);
    CHECK_THROWS_AS(run_prop5(pb, cfg, make_inner_solver(SolverKind::Svrg, {}), rng),
                    std::invalid_argument);
  }
  SUBCASE("eta held at 1 for k0 data passes, then decays") {
    const Index n = 50;
    const auto pb = make_problem(n, 4, 19, 1.0 / (100.0 * n));
    const double kappa = pb.smoothness() / (5.0 * n) - pb.mu();
    AccelConfig cfg;
    cfg.kappa = kappa;
    cfg.outer_iters = 12;
    cfg.k0 = 5;
    cfg.inner.averaging = Averaging::Off;
    cfg.contract = mk_contract(SolverKind::Svrg, pb, kappa, 1, 0.05);
    Rng rng(7);
    const auto tr = run_prop5(pb, cfg, make_inner_solver(SolverKind::Svrg, Perturbation{0.1}), rng);
    const double F0 = tr.records[0].objective;
    const double q = q_of(pb.mu(), kappa);
    for (int k = 1; k <= 12; ++k) {
      const auto& r = tr.records[k];
      CHECK(r.tolerance == doctest::Approx(model_delta_schedule(F0, q, k)));
      if (tr.records[k - 1].epochs < 5.0) CHECK(r.eta == 1.0);
      else CHECK(r.eta == doctest::Approx(bias_factor(r.tolerance, cfg.contract)));
    }
  }
}

TEST_CASE("optimality-gap driver plateau does not depend on the starting point") {
  const Index n = 100;
  const double mu = 1.0 / (100.0 * n);
  const auto pb = make_problem(n, 5, 20, mu);
  const auto star = support::newton_minimize(pb);
  const Perturbation drop{0.1};
  const double kappa = pb.smoothness() / (5.0 * n) - mu;
  Rng mr(1);
  const double s2 = perturbation_variance(pb, star.x, drop);
  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.outer_iters = 60;
  cfg.k0 = 1000;
  cfg.inner.averaging = Averaging::Off;
  cfg.contract = mk_contract(SolverKind::Svrg, pb, kappa, 1, s2);
  auto plateau = [&](double scale, std::uint64_t stream) {
    Rng xr(99);
    cfg.x0 = scale * random_vector(5, xr);
    double m = 0.0;
    for (int s = 0; s < 20; ++s) {
      Rng rng(derive_seed(stream, s));
      const auto tr = run_prop5(pb, cfg, make_inner_solver(SolverKind::Svrg, drop), rng);
      for (std::size_t i = tr.records.size() - 10; i < tr.records.size(); ++i)
        m += (tr.records[i].objective - star.f) / 200.0;
    }
    return m;
  };
  const double a = plateau(1.0, 11), b = plateau(2.0, 12);
  CHECK(std::abs(b - a) <= 0.2 * a);
}

TEST_CASE("accelerated prox-SGD in the convex case") {
  const auto pb = make_problem(100, 6, 21, 0.0, LossKind::Logistic, Regularizer::none(), 0.6);
  const auto star = support::newton_minimize(pb);
  REQUIRE(star.grad_norm <= 1e-12);
  const double R = star.x.norm();
  SUBCASE("sigma = 0 is accelerated prox-gradient with kappa = L") {
    Rng r1(1), r2(1);
    const auto a = accelerated_prox_sgd_convex(pb, 30, R, 0.0, r1);
    AccelConfig cfg;
    cfg.kappa = pb.smoothness();
    cfg.outer_iters = 30;
    const auto b = run_algorithm1(pb, cfg, gradient_model_builder(pb, pb.smoothness()), r2);
    CHECK(a.kappa == pb.smoothness());
    CHECK(a.x_final == b.x_final);
  }
  SUBCASE("K = 1 is one model step") {
    Rng rng(2);
    const auto tr = accelerated_prox_sgd_convex(pb, 1, R, 0.0, rng);
    CHECK((tr.x_final - grad_model_min(pb, Vector::Zero(6), pb.smoothness())).norm() <= 1e-15);
    CHECK_THROWS_AS(accelerated_prox_sgd_convex(pb, 0, R, 0.0, rng), std::invalid_argument);
    const auto sc = make_problem(20, 2, 1, 0.1);
    CHECK_THROWS_AS(accelerated_prox_sgd_convex(sc, 5, R, 0.0, rng), std::invalid_argument);
  }
  SUBCASE("mean final gap under the fixed-budget bound") {
    const Perturbation drop{0.1};
    Rng mr(3);
    // The bound needs a variance valid along the path; take the worst of a few points.
    double sigma2 = estimate_sigma2(pb, star.x, 1, drop, 20000, mr);
    sigma2 = std::max(sigma2, estimate_sigma2(pb, Vector::Zero(6), 1, drop, 20000, mr));
    const double sigma = std::sqrt(sigma2);
    const int K = 200;
    double mean = 0.0;
    for (int s = 0; s < 20; ++s) {
      Rng rng(derive_seed(5, s));
      const auto tr = accelerated_prox_sgd_convex(pb, K, R, sigma, rng, 1, drop, K);
      mean += (tr.records.back().objective - star.f) / 20.0;
    }
    CHECK(mean <= cor2_bound(pb.smoothness(), sigma, K, R));
    CHECK(cor2_bound(1.0, 0.0, 3, 1.0) == doctest::Approx(2.0 / 16));
  }
}

TEST_CASE("mini-batch restart") {
  const Index n = 200;
  const double mu = 1.0 / (10.0 * n);
  const auto pb = make_problem(n, 10, 22, mu);
  const auto star = support::newton_minimize(pb);
  SUBCASE("deterministic contract runs one linear phase") {
    const SolverContract c{1.0, 0.5, 1.0, 0.0};
    int calls = 0;
    StageSolver base = [&](const Vector& x, const StageRequest& req, Rng&) {
      ++calls;
      CHECK(req.steps == static_cast<long>(std::ceil(std::log(2.0 / 1e-3) / 0.5)));
      return StageResult{x, req.steps};
    };
    RestartConfig rc;
    rc.target_eps = 1e-3;
    rc.f0_estimate = 2.0;
    Rng rng(1);
    const auto tr = run_restart_minibatch(pb, base, c, rc, rng);
    CHECK(calls == 1);
    CHECK(tr.records.size() == 2);
  }
  SUBCASE("stages halve the target and double the batch") {
    const SolverContract c{1.0, 0.1, 0.5, 2.0};
    std::vector<StageRequest> seen;
    StageSolver base = [&](const Vector& x, const StageRequest& req, Rng&) {
      seen.push_back(req);
      return StageResult{x, req.steps * req.batch};
    };
    RestartConfig rc;
    rc.target_eps = 0.25;
    rc.f0_estimate = 5.0;
    Rng rng(1);
    const auto tr = run_restart_minibatch(pb, base, c, rc, rng);
    REQUIRE(seen.size() == 4);  // stage 0 plus K = log2(2 / 0.25) = 3
    for (int k = 1; k <= 3; ++k) {
      CHECK(seen[k].batch == (1 << k));
      CHECK(seen[k].steps == halving_stage_steps(c));
      CHECK(tr.records[k + 1].tolerance == doctest::Approx(2.0 * std::ldexp(1.0, -k)));
    }
    RestartConfig bad = rc;
    bad.target_eps = 0.0;
    CHECK_THROWS_AS(run_restart_minibatch(pb, base, c, bad, rng), std::invalid_argument);
    seen.clear();
    rc.mode = BiasMode::StepSize;
    run_restart_minibatch(pb, base, c, rc, rng);
    CHECK(seen[2].batch == 1);
    CHECK(seen[2].steps == 4 * halving_stage_steps(c));
    CHECK(seen[2].step_scale == 0.25);
  }
}

TEST_CASE("sublinear restart") {
  const double mu = 0.05;
  const auto pb = make_problem(60, 4, 23, mu);
  const auto star = support::newton_minimize(pb);
  // Gradient descent with step 1/L: h(z_t) - h* <= L |z0 - z*|^2 / (2t), so D = L, d = 1.
  StageSolver gd = [&](const Vector& x, const StageRequest& req, Rng&) {
    InnerConfig cfg;
    cfg.budget = req.steps;
    auto rep = ista_solve(unshifted(pb), x, cfg);
    return StageResult{rep.x_out, rep.grad_evals};
  };
  Rng rng(1);
  SUBCASE("period and contract") {
    const auto out = run_restart_sublinear(pb, gd, 2 * mu, 1.0, 0, 1.0, 0.0, Vector::Zero(4), rng);
    CHECK(out.period == 4);
    CHECK(out.contract.tau == doctest::Approx(1.0 / 8));
    CHECK(out.contract.C == 1.0);
    CHECK(out.trace.records.size() == 1);
    CHECK(out.trace.x_final == Vector::Zero(4));
    CHECK_THROWS_AS(run_restart_sublinear(pb, gd, 0.5 * mu, 1.0, 1, 1.0, 0.0, Vector::Zero(4), rng),
                    std::invalid_argument);
  }
  SUBCASE("noise-free restarts halve the gap each period") {
    const double D = pb.smoothness();
    Rng xr(3);
    const Vector x0 = random_vector(4, xr, 3.0);
    const auto out = run_restart_sublinear(pb, gd, D, 1.0, 6, 1.0, 0.0, x0, rng);
    for (std::size_t s = 1; s < out.trace.records.size(); ++s) {
      const double prev = out.trace.records[s - 1].objective - star.f;
      CHECK(out.trace.records[s].objective - star.f <= 0.5 * prev + 1e-15);
    }
  }
  SUBCASE("averaged prox-SGD stays under the restart envelope") {
    const Perturbation drop{0.1};
    const double L = pb.smoothness();
    const double step = 1.0 / (2.0 * L);
    // Tail-averaged SGD: h - h* <= 2 |z0 - z*|^2 / (step t) + step sigma2, i.e. D = 4/step.
    const double D = 4.0 / step, B = 2.0 * step;
    Rng mr(4);
    const double sigma2 = estimate_sigma2(pb, star.x, 1, drop, 20000, mr);
    const auto base = prox_sgd_stage_solver(pb, drop, step, Averaging::UniformTail);
    const Vector x0 = Vector::Constant(4, 2.0);
    const int S = 5;
    std::vector<double> mean(S + 1, 0.0);
    long period = 0;
    for (int s = 0; s < 20; ++s) {
      Rng r(derive_seed(9, s));
      const auto out = run_restart_sublinear(pb, base, D, 1.0, S, B, sigma2, x0, r);
      period = out.period;
      for (int i = 0; i <= S; ++i) mean[i] += (out.trace.records[i].objective - star.f) / 20.0;
    }
    const double h0 = mean[0];
    for (int i = 1; i <= S; ++i) {
      const double env = std::pow(1 - 1.0 / (2.0 * period), i * period) * h0 + B * sigma2;
      CHECK(mean[i] <= env);
    }
  }
  SUBCASE("restarted stage solver chunks requests") {
    std::vector<long> pieces;
    StageSolver count = [&](const Vector& x, const StageRequest& req, Rng&) {
      pieces.push_back(req.steps);
      return StageResult{x, req.steps};
    };
    const auto wrapped = restarted_stage_solver(count, 4);
    const auto res = wrapped(Vector::Zero(2), StageRequest{10, 1, 1.0}, rng);
    CHECK(pieces == std::vector<long>{4, 4, 2});
    CHECK(res.grad_evals == 10);
    CHECK_THROWS_AS(restarted_stage_solver(count, 0), std::invalid_argument);
  }
}
