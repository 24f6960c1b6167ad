#include <CLI11.hpp>

#include <charconv>
#include <sstream>

#include "stocat/bench.hpp"

namespace stocat {

namespace {

struct MethodEntry {
  MethodId id;
  const char* name;
};

constexpr MethodEntry kMethods[] = {
    {MethodId::Apg, "apg"},
    {MethodId::AccProxSgd, "acc-prox-sgd"},
    {MethodId::CatalystIsta, "catalyst-ista"},
    {MethodId::CatalystSvrg, "catalyst-svrg"},
    {MethodId::CatalystSaga, "catalyst-saga"},
    {MethodId::RestartSgd, "restart-sgd"},
    {MethodId::Svrg, "svrg"},
    {MethodId::Saga, "saga"},
    {MethodId::ProxSgd, "prox-sgd"},
};

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

LossKind parse_loss(const std::string& s) {
  if (s == "logistic") return LossKind::Logistic;
  if (s == "sqhinge") return LossKind::SquaredHinge;
  throw std::invalid_argument("invalid --loss '" + s + "'; expected logistic or sqhinge");
}

Regularizer parse_reg(const std::string& s) {
  if (s == "none") return Regularizer::none();
  if (s.rfind("l1:", 0) == 0) {
    double lambda = 0.0;
    if (parse_number(std::string_view(s).substr(3), lambda) && lambda >= 0.0)
      return Regularizer::l1(lambda);
  }
  throw std::invalid_argument("invalid --reg '" + s + "'; expected none or l1:LAMBDA with LAMBDA >= 0");
}

void parse_synth(const std::string& s, Index& n, Index& p) {
  const auto comma = s.find(',');
  long long nn = 0, pp = 0;
  if (comma == std::string::npos || !parse_number(std::string_view(s).substr(0, comma), nn) ||
      !parse_number(std::string_view(s).substr(comma + 1), pp) || nn < 1 || pp < 1)
    throw std::invalid_argument("invalid --synth '" + s + "'; expected n,p with positive integers");
  n = static_cast<Index>(nn);
  p = static_cast<Index>(pp);
}

}  // namespace

std::string to_string(MethodId id) {
  for (const auto& m : kMethods)
    if (m.id == id) return m.name;
  return "?";
}

std::optional<MethodId> parse_method(std::string_view name) {
  for (const auto& m : kMethods)
    if (name == m.name) return m.id;
  return std::nullopt;
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& m : kMethods) v.emplace_back(m.name);
    return v;
  }();
  return names;
}

bool requires_strong_convexity(MethodId id) {
  switch (id) {
    case MethodId::Apg:
    case MethodId::AccProxSgd:
    case MethodId::CatalystIsta:
      return false;
    default:
      return true;
  }
}

void RunConfig::validate() const {
  const bool has_path = !data_path.empty();
  const bool has_synth = synth_n > 0 || synth_p > 0;
  if (has_path == has_synth) throw std::invalid_argument("exactly one of --data or --synth is required");
  if (has_synth && (synth_n < 1 || synth_p < 1))
    throw std::invalid_argument("--synth needs positive n and p");
  if (!(mu_frac >= 0.0) || !std::isfinite(mu_frac))
    throw std::invalid_argument("--mu-frac must be a nonnegative number");
  Perturbation{dropout}.validate();
  if (methods.empty()) throw std::invalid_argument("--method is required");
  if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
  if (!(epochs > 0.0) || !std::isfinite(epochs)) throw std::invalid_argument("--epochs must be positive");
  if (k0 < 0) throw std::invalid_argument("--k0 must be nonnegative");
  if (!(kappa_scale > 0.0)) throw std::invalid_argument("--kappa-scale must be positive");
  if (workers < 1) throw std::invalid_argument("--workers must be >= 1");
  for (MethodId m : methods)
    if (mu_frac == 0.0 && requires_strong_convexity(m))
      throw std::invalid_argument("method " + to_string(m) + " requires mu > 0 (--mu-frac > 0)");
}

RunConfig parse_cli(int argc, const char* const* argv) {
  CLI::App app{"Accelerated stochastic composite optimization benchmark", "stocat_bench"};
  app.get_formatter()->column_width(28);

  RunConfig cfg;
  std::string synth, loss = "logistic", reg = "none";
  std::vector<std::string> methods;
  app.add_option("--data", cfg.data_path, "libsvm-format dataset")->type_name("PATH");
  app.add_option("--synth", synth, "synthetic dataset with n examples in dimension p")
      ->type_name("n,p");
  app.add_option("--loss", loss, "logistic | sqhinge")->capture_default_str();
  app.add_option("--reg", reg, "none | l1:LAMBDA")->capture_default_str();
  app.add_option("--mu-frac", cfg.mu_frac, "mu = 1/(M n); 0 means mu = 0")
      ->type_name("M")
      ->capture_default_str();
  app.add_option("--dropout", cfg.dropout, "gradient dropout probability in [0,1)")
      ->type_name("D")
      ->capture_default_str();
  app.add_option("--method", methods, "comma-separated: " + join(method_names(), ", "))
      ->type_name("ID")
      ->delimiter(',');
  app.add_option("--seeds", cfg.seeds, "number of seeds")->type_name("N")->capture_default_str();
  app.add_option("--master-seed", cfg.master_seed, "seed_i = S xor mix64(i)")
      ->type_name("S")
      ->capture_default_str();
  app.add_option("--epochs", cfg.epochs, "gradient-evaluation budget in data passes")
      ->type_name("E")
      ->capture_default_str();
  app.add_option("--k0", cfg.k0, "data passes before bias decay starts")
      ->type_name("K0")
      ->capture_default_str();
  app.add_option("--kappa-scale", cfg.kappa_scale, "c in kappa = L/(c n) - mu")
      ->type_name("C")
      ->capture_default_str();
  app.add_option("--out", cfg.out_dir, "output directory for curves.csv and summary.json")
      ->type_name("DIR");
  app.add_option("--workers", cfg.workers, "concurrent runs")->type_name("W")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    throw CliError(app.help(), 0);
  } catch (const CLI::ParseError& e) {
    throw CliError(std::string("error: ") + e.what() + "\n\n" + app.help(), 2);
  }

  try {
    if (!synth.empty()) parse_synth(synth, cfg.synth_n, cfg.synth_p);
    cfg.loss = parse_loss(loss);
    cfg.reg = parse_reg(reg);
    for (const auto& m : methods) {
      auto id = parse_method(m);
      if (!id)
        throw std::invalid_argument("unknown method '" + m + "'; valid methods: " +
                                    join(method_names(), ", "));
      cfg.methods.push_back(*id);
    }
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw CliError(std::string("error: ") + e.what(), 2);
  }
  return cfg;
}

RunConfig parse_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("stocat_bench");
  for (const auto& a : args) argv.push_back(a.c_str());
  return parse_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace stocat
