// covts command line: simulation, estimation, rate equations, experiments.
// Exit status: 0 success, 1 usage error, 2 runtime failure.

#include "covts/covts.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

using namespace covts;
using io::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

estim::WeightScheme parse_scheme(const std::string& s) {
  if (s == "nadaraya_watson" || s == "nw") return estim::WeightScheme::nadaraya_watson;
  if (s == "local_linear" || s == "ll") return estim::WeightScheme::local_linear;
  throw UsageError("unknown weight scheme '" + s + "'");
}

estim::Kernel parse_kernel(const std::string& s) {
  if (s == "epanechnikov") return estim::Kernel::epanechnikov;
  if (s == "flat") return estim::Kernel::flat;
  throw UsageError("unknown kernel '" + s + "'");
}

glasso::Solver parse_solver(const std::string& s) {
  if (s == "proximal_gradient" || s == "pg") return glasso::Solver::proximal_gradient;
  if (s == "admm") return glasso::Solver::admm;
  throw UsageError("unknown solver '" + s + "'");
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string process;
  std::size_t n = 100;
  std::optional<std::size_t> p;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool binary = false;
};

void run_simulate(const SimulateArgs& a) {
  json pj = io::load_json(a.process);
  if (a.p) pj["p"] = *a.p;
  if (a.seed) pj["seed"] = *a.seed;
  const auto spec = io::process_from_json(pj);
  io::save_data(a.out, procsim::simulate(spec, a.n), a.binary);
}

struct CovArgs {
  std::string data, matrix, out;
  double u = 0.0;
  bool pd = false;
  std::optional<double> pd_floor;
  std::optional<double> t;
  std::optional<double> bandwidth;
  std::string scheme = "nadaraya_watson";
  std::string kernel = "epanechnikov";
  bool center = false;
  bool binary = false;
};

SymMatrix input_covariance(const std::string& data, const std::string& matrix, const std::optional<double>& t,
                           const std::optional<double>& bandwidth, const std::string& scheme, const std::string& kernel,
                           bool center) {
  if (data.empty() == matrix.empty()) throw UsageError("give exactly one of --data or --matrix");
  if (!matrix.empty()) {
    if (t) throw UsageError("--t needs --data");
    return io::load_matrix(matrix);
  }
  const auto z = io::load_data(data);
  if (!t) return estim::sample_cov(z, center);
  const double b = bandwidth ? *bandwidth : estim::default_bandwidth(z.n());
  return estim::kernel_cov(z, *t, b, parse_scheme(scheme), parse_kernel(kernel));
}

void run_estimate_cov(const CovArgs& a) {
  const SymMatrix s = input_covariance(a.data, a.matrix, a.t, a.bandwidth, a.scheme, a.kernel, a.center);
  auto t = estim::threshold(s, a.u);
  json summary{{"u", a.u}, {"p", s.dim()}, {"kept", t.kept}};
  SymMatrix est = std::move(t.matrix);
  if (a.pd || a.pd_floor) {
    const double v = a.pd_floor ? *a.pd_floor : estim::default_pd_floor({est, a.u, t.kept});
    require(v > 0.0, "positive-definite floor is zero (nothing kept); pass --pd-floor");
    est = estim::positive_definitize(est, v);
    summary["pd_floor"] = v;
    summary["min_eigenvalue"] = linalg::min_eigenvalue(est);
  }
  io::save_matrix(a.out, est, a.binary);
  print_json(summary);
}

struct PrecArgs {
  std::string data, matrix, out, summary;
  std::optional<double> lambda, u;
  double c_lambda = 4.0;
  std::string solver = "admm";
  double tol = 1e-6;
  std::size_t max_iter = 10000;
  bool correlation = false;
  bool no_diagonal_penalty = false;
  std::optional<double> t;
  std::optional<double> bandwidth;
  std::string scheme = "nadaraya_watson";
  std::string kernel = "epanechnikov";
  bool center = false;
  bool binary = false;
};

void run_estimate_precision(const PrecArgs& a) {
  if (a.lambda.has_value() == a.u.has_value()) throw UsageError("give exactly one of --lambda or --u");
  const double lambda = a.lambda ? *a.lambda : glasso::lambda_from_threshold(*a.u, a.c_lambda);
  glasso::GlassoOptions opt;
  opt.solver = parse_solver(a.solver);
  opt.tol = a.tol;
  opt.max_iter = a.max_iter;
  opt.penalize_diagonal = !a.no_diagonal_penalty;

  glasso::GlassoSolution sol;
  if (a.t && !a.correlation) {
    if (a.data.empty() || !a.matrix.empty()) throw UsageError("--t needs --data");
    const auto z = io::load_data(a.data);
    const double b = a.bandwidth ? *a.bandwidth : estim::default_bandwidth(z.n());
    sol = glasso::tv_glasso(z, *a.t, b, lambda, opt, parse_scheme(a.scheme), parse_kernel(a.kernel));
  } else {
    const SymMatrix s = input_covariance(a.data, a.matrix, a.t, a.bandwidth, a.scheme, a.kernel, a.center);
    sol = a.correlation ? glasso::glasso_correlation_variant(s, lambda, opt) : glasso::glasso_fit(s, lambda, opt);
    sol.t = a.t;
  }
  io::save_matrix(a.out, sol.omega, a.binary);
  const json summary = io::to_json(sol);
  if (!a.summary.empty()) io::save_json(a.summary, summary);
  print_json(summary);
}

struct RatesArgs {
  double n = 100.0, p = 1.0, q = 4.0, alpha = 1.0;
  std::optional<double> bandwidth;
  double c_g = 1.0;
  std::string solve = "u-diamond";
  std::optional<double> u;
  std::string truth;
  std::optional<double> r;
  double M = 1.0;
  std::string cls = "H_r";
  std::string variant = "stationary_cov";
};

rates::SmallnessModel rates_model(const RatesArgs& a, const SymMatrix* truth) {
  if (truth) return truth;
  if (a.r) return rates::ClassParams{*a.r, a.M, 1.0};
  return std::monostate{};
}

void run_rates(const RatesArgs& a) {
  auto pr = rates::RateProfile::make(a.n, a.p, a.q, a.alpha, a.bandwidth);
  pr.c_g = a.c_g;
  pr.validate();
  std::optional<SymMatrix> truth;
  if (!a.truth.empty()) {
    truth = io::load_matrix(a.truth);
    pr.p = double(truth->dim());
  }
  const auto model = rates_model(a, truth ? &*truth : nullptr);
  json out{{"n", pr.n}, {"p", pr.p}, {"q", pr.q}, {"alpha", pr.alpha}, {"regime", rates::to_string(pr.regime())}};
  const double lo = rates::default_lower(pr);
  auto root_json = [](const rates::Root& r) {
    return json{{"u", r.u}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"residual", r.residual}, {"iterations", r.iterations}};
  };

  if (a.solve == "u-diamond") {
    out["u_diamond"] = root_json(rates::solve_u_diamond(pr));
    out["u_diamond_asymptotic"] = rates::u_diamond_asymptotic(pr);
  } else if (a.solve == "u-dagger" || a.solve == "u-circ") {
    if (std::holds_alternative<std::monostate>(model)) throw UsageError("--solve " + a.solve + " needs --truth or --r");
    const double top = truth ? 2.0 * truth->max_abs() : 2.0;
    if (a.solve == "u-dagger") {
      out["u_dagger"] = root_json(rates::solve_threshold_equation(rates::Side::D_model, rates::Side::H, pr, model, lo, top));
    } else {
      const double ud = rates::solve_u_diamond(pr).u;
      out["u_circ"] = root_json(rates::solve_threshold_equation(rates::Side::D_model, rates::Side::G_tilde, pr, model, lo, ud));
    }
  } else if (a.solve == "markers") {
    if (!truth) throw UsageError("--solve markers needs --truth");
    out["markers"] = harness::markers_json(rates::threshold_markers(pr, *truth));
  } else if (a.solve == "spectral") {
    if (std::holds_alternative<std::monostate>(model)) throw UsageError("--solve spectral needs --truth or --r");
    const auto opt = rates::spectral_optimal_threshold(pr, model);
    out["spectral"] = {{"u", opt.u}, {"bound", opt.bound}, {"u_bl", opt.u_bl}, {"bound_at_u_bl", opt.bound_at_u_bl}};
  } else if (a.solve == "classify") {
    if (!a.r) throw UsageError("--solve classify needs --r and --M");
    covmodels::SparsityClass cls;
    if (a.cls == "H_r")
      cls = covmodels::SparsityClass::H_r;
    else if (a.cls == "L_r")
      cls = covmodels::SparsityClass::L_r;
    else
      throw UsageError("--class must be H_r or L_r");
    const auto rep = rates::classify_regime(pr, {*a.r, a.M, 1.0}, cls);
    out["classification"] = {{"case", rep.active_case},      {"tie", rep.tie},
                             {"phi", rep.phi},               {"effective_dimension", rep.effective_dimension},
                             {"threshold", rep.threshold},   {"threshold_formula", rep.threshold_formula},
                             {"rate", rep.rate}};
  } else if (a.solve == "evaluate") {
    if (!a.u) throw UsageError("--solve evaluate needs --u");
    const double u = *a.u;
    json e{{"u", u}, {"H", rates::H(u, pr)}, {"G", rates::G(u, pr)}, {"G_tilde", rates::G_tilde(u, pr)}};
    if (pr.b) {
      e["H_sharp"] = rates::H_sharp(u, pr);
      e["G_sharp"] = rates::G_sharp(u, pr);
    }
    if (!std::holds_alternative<std::monostate>(model)) {
      e["D"] = rates::D_of(u, pr, model);
      e["risk_bound"] = rates::risk_upper_bound(u, pr, model, rates::parse_risk_variant(a.variant));
      e["spectral_bound"] = rates::spectral_bound(u, pr, model);
    }
    out["evaluate"] = e;
  } else {
    throw UsageError("unknown --solve target '" + a.solve + "'");
  }
  print_json(out);
}

struct ExperimentArgs {
  std::string config, out;
  std::optional<std::size_t> workers;
};

void run_experiment_cmd(const ExperimentArgs& a) {
  const auto cfg = harness::config_from_json(io::load_json(a.config));
  const auto res = harness::run_experiment(cfg, a.workers.value_or(0));
  harness::write_result(res, a.out);
  std::cout << "wrote " << res.rows.size() << " rows to " << a.out << " (" << res.failures.size()
            << " failed cells)\n";
}

struct CvArgs {
  std::string data;
  std::vector<double> values;
  double lo = 0.01, hi = 1.0;
  std::size_t count = 20;
  std::size_t splits = 10;
  std::uint64_t seed = 1;
  bool center = false;
};

void run_cv(const CvArgs& a) {
  harness::GridSpec g;
  g.explicit_values = a.values;
  g.lo = a.lo;
  g.hi = a.hi;
  g.count = a.count;
  g.validate();
  const auto cv = harness::cv_threshold(io::load_data(a.data), g.values(), a.splits, a.seed, a.center);
  print_json({{"u", cv.u}, {"grid", cv.grid}, {"mean_score", cv.mean_score}, {"cuts", cv.cuts}});
}

struct Fig2Args {
  std::string out;
  harness::Fig2Options opt;
};

void run_fig2_cmd(const Fig2Args& a) {
  const auto entries = harness::run_fig2(a.opt, a.out);
  json summary = json::object();
  for (const auto& e : entries) summary[e.stem] = harness::markers_json(e.markers);
  print_json(summary);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covts: covariance and precision estimation for dependent high-dimensional data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", harness::kVersion);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "simulate a process and write a data matrix");
  c_sim->add_option("--process", sim.process, "process spec (JSON file)")->required()->check(CLI::ExistingFile);
  c_sim->add_option("--n", sim.n, "number of time points")->check(CLI::PositiveNumber);
  c_sim->add_option("--p", sim.p, "dimension (overrides the spec)");
  c_sim->add_option("--seed", sim.seed, "seed (overrides the spec)");
  c_sim->add_option("--out", sim.out, "output data file")->required();
  c_sim->add_flag("--binary", sim.binary, "write the binary format");

  CovArgs cov;
  auto* c_cov = app.add_subcommand("estimate-cov", "thresholded (and optionally positive-definite) covariance");
  c_cov->add_option("--data", cov.data, "data file (p x n)");
  c_cov->add_option("--matrix", cov.matrix, "covariance matrix file");
  c_cov->add_option("--u", cov.u, "threshold")->required()->check(CLI::NonNegativeNumber);
  c_cov->add_flag("--pd", cov.pd, "positive-definitize with the default floor");
  c_cov->add_option("--pd-floor", cov.pd_floor, "eigenvalue floor v")->check(CLI::PositiveNumber);
  c_cov->add_option("--t", cov.t, "rescaled time for the kernel estimator")->check(CLI::Range(0.0, 1.0));
  c_cov->add_option("--bandwidth", cov.bandwidth, "kernel bandwidth (default n^{-1/5})");
  c_cov->add_option("--scheme", cov.scheme, "nadaraya_watson | local_linear");
  c_cov->add_option("--kernel", cov.kernel, "epanechnikov | flat");
  c_cov->add_flag("--center", cov.center, "subtract the sample mean");
  c_cov->add_option("--out", cov.out, "output matrix file")->required();
  c_cov->add_flag("--binary", cov.binary, "write the binary format");

  PrecArgs prec;
  auto* c_prec = app.add_subcommand("estimate-precision", "graphical lasso precision estimate");
  c_prec->add_option("--data", prec.data, "data file (p x n)");
  c_prec->add_option("--matrix", prec.matrix, "covariance matrix file");
  c_prec->add_option("--lambda", prec.lambda, "penalty")->check(CLI::NonNegativeNumber);
  c_prec->add_option("--u", prec.u, "threshold; lambda = c_lambda * u")->check(CLI::NonNegativeNumber);
  c_prec->add_option("--c-lambda", prec.c_lambda, "multiplier for --u")->check(CLI::PositiveNumber);
  c_prec->add_option("--solver", prec.solver, "proximal_gradient | admm");
  c_prec->add_option("--tol", prec.tol, "KKT tolerance")->check(CLI::PositiveNumber);
  c_prec->add_option("--max-iter", prec.max_iter, "iteration cap")->check(CLI::PositiveNumber);
  c_prec->add_flag("--correlation", prec.correlation, "fit on the correlation matrix and rescale");
  c_prec->add_flag("--no-diagonal-penalty", prec.no_diagonal_penalty, "leave the diagonal unpenalized");
  c_prec->add_option("--t", prec.t, "rescaled time for the time-varying fit")->check(CLI::Range(0.0, 1.0));
  c_prec->add_option("--bandwidth", prec.bandwidth, "kernel bandwidth (default n^{-1/5})");
  c_prec->add_option("--scheme", prec.scheme, "nadaraya_watson | local_linear");
  c_prec->add_option("--kernel", prec.kernel, "epanechnikov | flat");
  c_prec->add_flag("--center", prec.center, "subtract the sample mean");
  c_prec->add_option("--out", prec.out, "output matrix file")->required();
  c_prec->add_option("--summary", prec.summary, "write the solver summary JSON here");
  c_prec->add_flag("--binary", prec.binary, "write the binary format");

  RatesArgs rat;
  auto* c_rates = app.add_subcommand("rates", "evaluate or solve the rate equations");
  c_rates->add_option("--n", rat.n, "sample size")->required();
  c_rates->add_option("--p", rat.p, "dimension");
  c_rates->add_option("--q", rat.q, "moment order");
  c_rates->add_option("--alpha", rat.alpha, "dependence decay exponent");
  c_rates->add_option("--bandwidth", rat.bandwidth, "bandwidth for the effective sample size n b");
  c_rates->add_option("--c-g", rat.c_g, "constant inside G");
  c_rates->add_option("--solve", rat.solve, "u-diamond | u-dagger | u-circ | markers | spectral | classify | evaluate");
  c_rates->add_option("--u", rat.u, "threshold for --solve evaluate")->check(CLI::PositiveNumber);
  c_rates->add_option("--truth", rat.truth, "covariance matrix file for D-type terms");
  c_rates->add_option("--r", rat.r, "class exponent r");
  c_rates->add_option("--M", rat.M, "class budget M")->check(CLI::PositiveNumber);
  c_rates->add_option("--class", rat.cls, "H_r | L_r");
  c_rates->add_option("--variant", rat.variant, "stationary_cov | stationary_prec | tv_cov | tv_prec");

  ExperimentArgs exp;
  auto* c_exp = app.add_subcommand("experiment", "run a Monte Carlo experiment from a config file");
  c_exp->add_option("--config", exp.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  c_exp->add_option("--out", exp.out, "output directory")->required();
  c_exp->add_option("--workers", exp.workers, "worker threads (default COVTS_WORKERS or all cores)")
      ->check(CLI::PositiveNumber);

  CvArgs cv;
  auto* c_cv = app.add_subcommand("cv-threshold", "select a threshold by temporal-block cross-validation");
  c_cv->add_option("--data", cv.data, "data file (p x n)")->required()->check(CLI::ExistingFile);
  c_cv->add_option("--values", cv.values, "explicit grid values");
  c_cv->add_option("--lo", cv.lo, "geometric grid lower end");
  c_cv->add_option("--hi", cv.hi, "geometric grid upper end");
  c_cv->add_option("--count", cv.count, "geometric grid size");
  c_cv->add_option("--splits", cv.splits, "number of random cuts")->check(CLI::PositiveNumber);
  c_cv->add_option("--seed", cv.seed, "seed for the cut positions");
  c_cv->add_flag("--center", cv.center, "subtract block means");

  Fig2Args fig;
  auto* c_fig = app.add_subcommand("fig2", "rate curves for the rational-quadratic preset");
  c_fig->add_option("--out", fig.out, "output directory")->required();
  c_fig->add_option("--n", fig.opt.n, "sample size");
  c_fig->add_option("--p", fig.opt.p, "dimension");
  c_fig->add_option("--K", fig.opt.K, "rational-quadratic shape");
  c_fig->add_option("--q", fig.opt.q, "moment order");
  c_fig->add_option("--alpha-weak", fig.opt.alpha_weak, "alpha for the weak-dependence curves");
  c_fig->add_option("--alpha-strong", fig.opt.alpha_strong, "alpha for the strong-dependence curves");
  c_fig->add_option("--site-seed", fig.opt.site_seed, "seed for the site locations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_sim) run_simulate(sim);
    if (*c_cov) run_estimate_cov(cov);
    if (*c_prec) run_estimate_precision(prec);
    if (*c_rates) run_rates(rat);
    if (*c_exp) run_experiment_cmd(exp);
    if (*c_cv) run_cv(cv);
    if (*c_fig) run_fig2_cmd(fig);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
