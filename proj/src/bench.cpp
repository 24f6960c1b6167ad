#include "stocat/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace stocat {

// ---------------------------------------------------------------------------
// F* oracle
// ---------------------------------------------------------------------------

FStarEstimate estimate_f_star(const Problem& problem, double tol, long max_iters) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  const double L = problem.smoothness();
  const double mu = problem.mu();
  const Regularizer& reg = problem.reg();
  auto step = [&](const Vector& z) {
    return prox(reg, z - problem.gradient(z) / L, 1.0 / L);
  };

  FStarEstimate est;
  est.tol = tol;
  est.certificate = std::numeric_limits<double>::infinity();
  Vector x = Vector::Zero(problem.p());
  Vector y = x;
  double t = 1.0;
  double best = problem.value(x);
  est.x = x;
  for (long it = 1; it <= max_iters; ++it) {
    Vector x_new = step(y);
    // Gradient-based adaptive restart keeps the iteration monotone enough
    // to certify quickly on ill-conditioned instances.
    if ((y - x_new).dot(x_new - x) > 0.0) {
      t = 1.0;
      y = x;
      x_new = step(y);
    }
    const double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_new + ((t - 1.0) / t_new) * (x_new - x);
    x = std::move(x_new);
    t = t_new;
    est.iterations = it;

    if (it % 10 == 0 || it == max_iters) {
      const Vector x_plus = step(x);
      const double f_plus = problem.value(x_plus);
      if (f_plus < best) {
        best = f_plus;
        est.x = x_plus;
      }
      if (mu > 0.0) {
        const double g2 = (L * (x - x_plus)).squaredNorm();
        const double cert = g2 / (2.0 * mu);
        if (f_plus <= best && cert < est.certificate) est.certificate = cert;
        if (cert <= tol) {
          est.certified = true;
          est.certificate = cert;
          est.x = x_plus;
          best = f_plus;
          break;
        }
      } else if ((x - x_plus).norm() == 0.0) {
        break;
      }
    }
  }
  est.oracle = best;
  est.value = best;
  return est;
}

void apply_run_minimum(FStarEstimate& est, double observed) {
  if (!std::isfinite(observed)) return;
  if (est.certified && observed < est.oracle - est.tol) est.disagreement = true;
  est.value = std::min(est.value, observed);
}

// ---------------------------------------------------------------------------
// Methods
// ---------------------------------------------------------------------------

double method_kappa(MethodId id, const Problem& problem, double kappa_scale) {
  const double Lf = problem.smoothness();
  const double mu = problem.mu();
  switch (id) {
    case MethodId::Apg:
    case MethodId::AccProxSgd:
    case MethodId::CatalystIsta:
      return Lf - mu;
    case MethodId::CatalystSvrg:
    case MethodId::CatalystSaga:
      return std::max(Lf / (kappa_scale * static_cast<double>(problem.n())) - mu, 0.0);
    default:
      return 0.0;
  }
}

long catalyst_ista_inner_steps(const Problem& problem, double kappa) {
  const double tau = (problem.mu() + kappa) / (problem.smoothness() + kappa);
  return std::max(1L, static_cast<long>(std::ceil(std::log(8.0) / tau)));
}

namespace {

/// Closed-form single-sample variance of the stochastic oracle at x:
/// E|D u_i - ubar|^2 = mean|u_i|^2 / (1 - delta) - |ubar|^2.
double oracle_variance(const Problem& problem, const Vector& x, const Perturbation& perturb) {
  const auto& a = problem.data().features;
  double m2 = 0.0;
  Vector mean = Vector::Zero(problem.p());
  for (Index i = 0; i < problem.n(); ++i) {
    const double s = problem.example_scale(i, x);
    m2 += s * s * a.row(i).squaredNorm();
    mean.noalias() += s * a.row(i).transpose();
  }
  const double n = static_cast<double>(problem.n());
  m2 /= n;
  mean /= n;
  return std::max(0.0, m2 / (1.0 - perturb.dropout) - mean.squaredNorm());
}

/// Unaccelerated solver restarted every n steps. The step is held until k0
/// data passes have been spent and then decays like 1/(mu t); SVRG and SAGA
/// only decay when the oracle is perturbed, since they converge without it
/// otherwise.
RunTrace run_baseline(SolverKind kind, const Problem& problem, const MethodSettings& s,
                      Rng& rng) {
  const long n = static_cast<long>(problem.n());
  const AuxObjective H = unshifted(problem);
  const double s0 = default_step(kind, H);
  const bool decay = kind == SolverKind::ProxSgd || s.perturb.active();
  RunTrace trace;
  Vector x = Vector::Zero(problem.p());
  long evals = 0;
  long decayed_steps = 0;
  TraceRecord r0;
  r0.objective = problem.value(x);
  trace.records.push_back(r0);
  try {
    for (int e = 1; static_cast<double>(evals) / static_cast<double>(n) < s.epochs; ++e) {
      double scale = 1.0;
      if (decay && static_cast<double>(evals) / static_cast<double>(n) >= s.k0) {
        decayed_steps += n;
        scale = 1.0 / (1.0 + 0.5 * problem.mu() * s0 * static_cast<double>(decayed_steps));
      }
      InnerConfig cfg;
      cfg.step = s0;
      cfg.step_scale = scale;
      cfg.budget = n;
      cfg.averaging = kind == SolverKind::ProxSgd ? Averaging::Exponential : Averaging::Off;
      InnerReport rep = inner_solve(kind, H, x, cfg, s.perturb, rng);
      x = std::move(rep.x_out);
      evals += rep.grad_evals;
      TraceRecord r;
      r.k = e;
      r.objective = problem.value(x);
      r.grad_evals = evals;
      r.epochs = static_cast<double>(evals) / static_cast<double>(n);
      r.eta = scale;
      r.inner_budget = n;
      r.batch = 1;
      r.alpha = 1.0;
      trace.records.push_back(r);
      if (!std::isfinite(r.objective) || r.objective > 1e6 * std::max(r0.objective, 1.0))
        throw DivergenceError("objective left the divergence guard at pass " + std::to_string(e));
    }
  } catch (const DivergenceError& err) {
    trace.diverged = true;
    trace.message = err.what();
  }
  trace.x_final = x;
  return trace;
}

RunTrace run_restart_sgd(const Problem& problem, const MethodSettings& s, Rng& rng) {
  const long n = static_cast<long>(problem.n());
  const SolverContract c = mk_contract(SolverKind::ProxSgd, problem, 0.0, 1, s.sigma2_full);
  RestartConfig rc;
  rc.f0_estimate = std::max(problem.value(Vector::Zero(problem.p())) - s.f_star, 1e-300);
  // Deepest halving stage whose cumulative cost fits in the epoch budget.
  const double budget = s.epochs * static_cast<double>(n);
  if (c.deterministic()) {
    rc.target_eps = rc.f0_estimate * 1e-12;
  } else {
    const double floor = c.B * c.sigma2;
    const double t0 =
        c.C * rc.f0_estimate > floor ? std::ceil(std::log(c.C * rc.f0_estimate / floor) / c.tau) : 0;
    const double per = static_cast<double>(halving_stage_steps(c));
    int K = 0;
    while (K < 30 && t0 + per * (std::ldexp(1.0, K + 2) - 2.0) <= budget) ++K;
    rc.target_eps = halving_eps(c, K);
  }
  const StageSolver base = prox_sgd_stage_solver(problem, s.perturb, 0.0, Averaging::Exponential);
  return run_restart_minibatch(problem, base, c, rc, rng);
}

}  // namespace

AccelConfig method_config(MethodId id, const Problem& problem, const MethodSettings& s) {
  const long n = static_cast<long>(problem.n());
  const double kappa = method_kappa(id, problem, s.kappa_scale);
  const int passes = static_cast<int>(std::ceil(s.epochs));

  AccelConfig cfg;
  cfg.kappa = kappa;
  cfg.max_epochs = s.epochs;
  cfg.k0 = s.k0;
  cfg.perturb = s.perturb;
  cfg.f_star_estimate = s.f_star;
  cfg.warm_start = problem.reg().is_zero() ? WarmStart::PrevY : WarmStart::PrevX;

  switch (id) {
    case MethodId::Apg:
      cfg.outer_iters = passes;
      break;
    case MethodId::AccProxSgd:
      cfg.outer_iters = static_cast<int>(std::ceil(s.epochs * static_cast<double>(n)));
      cfg.record_every = static_cast<int>(n);
      break;
    case MethodId::CatalystIsta:
      cfg.inner_steps = catalyst_ista_inner_steps(problem, kappa);
      cfg.inner.averaging = Averaging::Off;
      cfg.contract = mk_contract(SolverKind::Ista, problem, kappa, 1, 0.0);
      cfg.outer_iters = passes + 1;
      break;
    case MethodId::CatalystSvrg:
    case MethodId::CatalystSaga: {
      const SolverKind kind = id == MethodId::CatalystSvrg ? SolverKind::Svrg : SolverKind::Saga;
      cfg.contract = mk_contract(kind, problem, kappa, 1, s.sigma2_vr);
      cfg.inner.averaging = Averaging::Off;
      cfg.outer_iters = passes + 1;
      break;
    }
    default:
      break;
  }
  return cfg;
}

RunTrace run_method(MethodId id, const Problem& problem, const MethodSettings& s, Rng& rng) {
  const double mu = problem.mu();
  const AccelConfig cfg = method_config(id, problem, s);
  const double kappa = cfg.kappa;

  switch (id) {
    case MethodId::Apg:
      return run_algorithm1(problem, cfg, gradient_model_builder(problem, kappa + mu, s.perturb),
                            rng);
    case MethodId::AccProxSgd:
      if (mu == 0.0) {
        const double R = std::max(s.x_star.norm(), 1e-12);
        return accelerated_prox_sgd_convex(problem, cfg.outer_iters, R, std::sqrt(s.sigma2_full),
                                           rng, 1, s.perturb, cfg.record_every);
      }
      return run_algorithm1(problem, cfg, stochastic_model_builder(problem, kappa, 1, s.perturb),
                            rng);
    case MethodId::CatalystIsta:
      return run_algorithm2(problem, cfg, make_inner_solver(SolverKind::Ista, {}), rng);
    case MethodId::CatalystSvrg:
      return run_prop5(problem, cfg, make_inner_solver(SolverKind::Svrg, s.perturb), rng);
    case MethodId::CatalystSaga:
      return run_prop5(problem, cfg, make_inner_solver(SolverKind::Saga, s.perturb), rng);
    case MethodId::RestartSgd:
      return run_restart_sgd(problem, s, rng);
    case MethodId::Svrg:
      return run_baseline(SolverKind::Svrg, problem, s, rng);
    case MethodId::Saga:
      return run_baseline(SolverKind::Saga, problem, s, rng);
    case MethodId::ProxSgd:
      return run_baseline(SolverKind::ProxSgd, problem, s, rng);
  }
  throw std::invalid_argument("unknown method");
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

void sort_canonical(std::vector<CurveRecord>& records) {
  std::stable_sort(records.begin(), records.end(), [](const CurveRecord& a, const CurveRecord& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.epoch < b.epoch;
  });
}

std::vector<SummaryStat> summarize(const std::vector<CurveRecord>& records) {
  std::map<std::pair<std::string, double>, std::vector<double>> groups;
  std::vector<CurveRecord> sorted = records;
  sort_canonical(sorted);
  for (const auto& r : sorted) groups[{r.method, r.epoch}].push_back(r.gap);
  std::vector<SummaryStat> out;
  out.reserve(groups.size());
  for (const auto& [key, gaps] : groups) {
    SummaryStat s;
    s.method = key.first;
    s.epoch = key.second;
    s.count = static_cast<int>(gaps.size());
    double sum = 0.0;
    for (double g : gaps) sum += g;
    s.mean_gap = sum / s.count;
    if (s.count > 1) {
      double ss = 0.0;
      for (double g : gaps) ss += (g - s.mean_gap) * (g - s.mean_gap);
      s.std_gap = std::sqrt(ss / (s.count - 1));
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const std::vector<CurveRecord>& records) {
  out << kCsvHeader << '\n';
  for (const auto& r : records) {
    out << r.method << ',' << r.seed << ',' << fmt17(r.epoch) << ',' << fmt17(r.objective) << ','
        << fmt17(r.gap) << ',' << r.grad_evals << ',' << (r.diverged ? 1 : 0) << '\n';
  }
}

std::vector<CurveRecord> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader)
    throw std::runtime_error("curves CSV: missing or unexpected header");
  std::vector<CurveRecord> out;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 7)
      throw std::runtime_error("curves CSV line " + std::to_string(lineno) + ": expected 7 fields");
    CurveRecord r;
    r.method = f[0];
    r.seed = std::stoi(f[1]);
    r.epoch = std::strtod(f[2].c_str(), nullptr);
    r.objective = std::strtod(f[3].c_str(), nullptr);
    r.gap = std::strtod(f[4].c_str(), nullptr);
    r.grad_evals = std::stol(f[5]);
    r.diverged = f[6] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

Problem make_problem(const RunConfig& config) {
  config.validate();
  Dataset data = config.data_path.empty()
                     ? synth_generate(config.synth_n, config.synth_p, config.master_seed)
                     : load_libsvm(config.data_path);
  const double n = static_cast<double>(data.n());
  const double mu = config.mu_frac > 0.0 ? 1.0 / (config.mu_frac * n) : 0.0;
  return Problem(std::make_shared<const Dataset>(std::move(data)), config.loss, mu, config.reg);
}

ExperimentResult run_experiment(const RunConfig& config) {
  const Problem problem = make_problem(config);
  ExperimentResult result;
  result.n = problem.n();
  result.p = problem.p();
  result.mu = problem.mu();
  result.L = problem.loss_smoothness();
  result.f_star = estimate_f_star(problem);

  MethodSettings settings;
  settings.epochs = config.epochs;
  settings.k0 = config.k0;
  settings.kappa_scale = config.kappa_scale;
  settings.perturb = Perturbation{config.dropout};
  settings.x_star = result.f_star.x;
  settings.f_star = result.f_star.oracle;
  settings.sigma2_full = oracle_variance(problem, settings.x_star, settings.perturb);
  settings.sigma2_vr = perturbation_variance(problem, settings.x_star, settings.perturb);

  struct Job {
    MethodId method;
    int seed;
  };
  std::vector<Job> jobs;
  for (MethodId m : config.methods)
    for (int i = 0; i < config.seeds; ++i) jobs.push_back({m, i});
  result.runs.resize(jobs.size());

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        RunOutcome& out = result.runs[j];
        out.method = to_string(jobs[j].method);
        out.seed = jobs[j].seed;
        out.rng_seed = derive_seed(config.master_seed, static_cast<std::uint64_t>(jobs[j].seed));
        Rng rng(out.rng_seed);
        out.trace = run_method(jobs[j].method, problem, settings, rng);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  const int nthreads = std::min<int>(config.workers, static_cast<int>(jobs.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (const auto& run : result.runs)
    for (const auto& r : run.trace.records) apply_run_minimum(result.f_star, r.objective);

  const double n = static_cast<double>(problem.n());
  for (const auto& run : result.runs) {
    for (const auto& r : run.trace.records) {
      CurveRecord c;
      c.method = run.method;
      c.seed = run.seed;
      c.grad_evals = r.grad_evals;
      c.epoch = static_cast<double>(r.grad_evals) / n;
      c.objective = r.objective;
      c.gap = r.objective - result.f_star.value;
      c.diverged = run.trace.diverged;
      result.curves.push_back(std::move(c));
    }
  }
  sort_canonical(result.curves);
  result.summary = summarize(result.curves);

  if (!config.out_dir.empty()) {
    std::filesystem::create_directories(config.out_dir);
    result.csv_path = std::filesystem::path(config.out_dir) / "curves.csv";
    result.json_path = std::filesystem::path(config.out_dir) / "summary.json";
    std::ofstream csv(result.csv_path, std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + result.csv_path.string());
    write_csv(csv, result.curves);
    std::ofstream js(result.json_path, std::ios::binary);
    if (!js) throw std::runtime_error("cannot write " + result.json_path.string());
    js << summary_json(config, result).dump(2) << '\n';
    if (!csv || !js) throw std::runtime_error("write failure in " + config.out_dir);
  }
  return result;
}

nlohmann::json config_json(const RunConfig& config) {
  nlohmann::json j;
  if (config.data_path.empty())
    j["data"] = {{"synth", {{"n", config.synth_n}, {"p", config.synth_p}}}};
  else
    j["data"] = {{"path", config.data_path}};
  j["loss"] = to_string(config.loss);
  j["reg"] = config.reg.describe();
  j["mu_frac"] = config.mu_frac;
  j["dropout"] = config.dropout;
  std::vector<std::string> methods;
  for (MethodId m : config.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["seeds"] = config.seeds;
  j["master_seed"] = config.master_seed;
  j["epochs"] = config.epochs;
  j["k0"] = config.k0;
  j["kappa_scale"] = config.kappa_scale;
  j["workers"] = config.workers;
  return j;
}

nlohmann::json summary_json(const RunConfig& config, const ExperimentResult& result) {
  nlohmann::json j;
  j["version"] = kVersion;
  j["config"] = config_json(config);
  j["problem"] = {{"n", result.n}, {"p", result.p}, {"mu", result.mu}, {"L", result.L}};
  nlohmann::json seeds = nlohmann::json::array();
  for (int i = 0; i < config.seeds; ++i)
    seeds.push_back({{"index", i}, {"rng_seed", derive_seed(config.master_seed, i)}});
  j["seeds"] = seeds;
  const auto& fs = result.f_star;
  j["f_star"] = {{"estimate", fs.value},
                 {"oracle", fs.oracle},
                 {"certified", fs.certified},
                 {"certificate", std::isfinite(fs.certificate) ? nlohmann::json(fs.certificate)
                                                               : nlohmann::json(nullptr)},
                 {"tol", fs.tol},
                 {"oracle_iterations", fs.iterations},
                 {"disagreement", fs.disagreement}};
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : result.runs) {
    runs.push_back({{"method", r.method},
                    {"seed", r.seed},
                    {"kappa", r.trace.kappa},
                    {"records", r.trace.records.size()},
                    {"diverged", r.trace.diverged},
                    {"message", r.trace.message}});
  }
  j["runs"] = runs;
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : result.summary) {
    summary.push_back({{"method", s.method},
                       {"epoch", s.epoch},
                       {"mean_gap", s.mean_gap},
                       {"std_gap", s.std_gap},
                       {"count", s.count}});
  }
  j["summary"] = summary;
  return j;
}

}  // namespace stocat
