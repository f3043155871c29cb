#pragma once

// Monte Carlo experiment orchestration: configuration, the replication
// worker pool, result tables, cross-validated threshold choice, trend
// verdicts, and rate-curve emission (CSV + SVG).

#include "covts/core.hpp"
#include "covts/covmodels.hpp"
#include "covts/estim.hpp"
#include "covts/glasso.hpp"
#include "covts/io.hpp"
#include "covts/linalg.hpp"
#include "covts/procsim.hpp"
#include "covts/rates.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace covts::harness {

using json = nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Estimator { threshold_cov, pd_threshold_cov, glasso, glasso_corr, kernel_cov_threshold, tv_glasso };

inline const char* to_string(Estimator e) {
  switch (e) {
    case Estimator::threshold_cov: return "threshold_cov";
    case Estimator::pd_threshold_cov: return "pd_threshold_cov";
    case Estimator::glasso: return "glasso";
    case Estimator::glasso_corr: return "glasso_corr";
    case Estimator::kernel_cov_threshold: return "kernel_cov_threshold";
    case Estimator::tv_glasso: return "tv_glasso";
  }
  return "?";
}

inline Estimator parse_estimator(const std::string& s) {
  for (auto e : {Estimator::threshold_cov, Estimator::pd_threshold_cov, Estimator::glasso, Estimator::glasso_corr,
                 Estimator::kernel_cov_threshold, Estimator::tv_glasso})
    if (s == to_string(e)) return e;
  throw InvalidArgument("unknown estimator '" + s + "'");
}

inline bool estimates_precision(Estimator e) {
  return e == Estimator::glasso || e == Estimator::glasso_corr || e == Estimator::tv_glasso;
}
inline bool time_varying(Estimator e) { return e == Estimator::kernel_cov_threshold || e == Estimator::tv_glasso; }

// Geometric grid lo..hi with `count` points, or an explicit increasing list.
struct GridSpec {
  std::vector<double> explicit_values;
  double lo = 0.01;
  double hi = 1.0;
  std::size_t count = 10;

  std::vector<double> values() const {
    if (!explicit_values.empty()) return explicit_values;
    if (count == 1) return {lo};
    std::vector<double> v(count);
    const double a = std::log(lo), b = std::log(hi);
    for (std::size_t i = 0; i < count; ++i) v[i] = std::exp(a + (b - a) * double(i) / double(count - 1));
    v.front() = lo;
    v.back() = hi;
    return v;
  }

  void validate() const {
    const auto v = values();
    require(!v.empty(), "grid must be nonempty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      require(v[i] > 0.0 && std::isfinite(v[i]), "grid values must be positive");
      if (i) require(v[i] > v[i - 1], "grid values must be strictly increasing");
    }
  }
};

// Ground truth Sigma for dimension p.
struct TruthSpec {
  std::string kind = "identity";  // identity | tridiagonal | rational_quadratic | gamma_exponential | counterexample
  double K = 4.0;
  std::optional<double> tau;        // absolute length scale
  double tau_exponent = 1.0 / 6.0;  // tau = p^{tau_exponent} when tau is unset
  double theta = 1.0;
  double rho = 0.3;
  double eps = 0.0;  // counterexample; 0 means (p-1)^{-1/2} / 2
  std::uint64_t site_seed = 1;
};

struct ExperimentConfig {
  json process = json::object();  // ProcessSpec without p and seed; those come from the cell
  TruthSpec truth;
  Estimator estimator = Estimator::threshold_cov;
  GridSpec grid;
  std::string grid_kind = "u";  // glasso estimators: "lambda" (grid is lambda) or "u" (lambda = c_lambda * u)
  std::vector<std::size_t> n_list{100};
  std::vector<std::size_t> p_list{10};
  std::size_t replications = 1;
  std::uint64_t master_seed = 1;
  double bandwidth_exponent = 0.2;  // b = n^{-exponent}
  double t = 0.5;
  estim::WeightScheme scheme = estim::WeightScheme::nadaraya_watson;
  estim::Kernel kernel = estim::Kernel::epanechnikov;
  procsim::AffinePath scale_path{1.0, 1.0};  // time-varying truth s(t) Sigma
  double glasso_tol = 1e-6;
  std::size_t glasso_max_iter = 10000;
  glasso::Solver solver = glasso::Solver::admm;
  std::optional<double> pd_floor;  // default u (kept/p)^{1/2}
  bool spectral = true;
  bool timing = false;
  bool center = false;
  double c_g = 1.0;
  double c_lambda = 4.0;

  void validate() const {
    grid.validate();
    require(!n_list.empty() && !p_list.empty(), "n_list and p_list must be nonempty");
    for (auto n : n_list) require(n >= 1, "n values must be at least 1");
    for (auto p : p_list) require(p >= 1, "p values must be at least 1");
    require(replications >= 1, "replications must be at least 1");
    require(grid_kind == "u" || grid_kind == "lambda", "grid_kind must be 'u' or 'lambda'");
    require(bandwidth_exponent > 0.0, "bandwidth exponent must be positive");
    require(t >= 0.0 && t <= 1.0, "t must lie in [0, 1]");
    require(glasso_tol > 0.0 && glasso_max_iter >= 1, "glasso tolerance and iteration cap must be positive");
    if (pd_floor) require(*pd_floor > 0.0, "pd_floor must be positive");
  }
};

inline json to_json(const ExperimentConfig& c) {
  json truth{{"kind", c.truth.kind},          {"K", c.truth.K},     {"tau_exponent", c.truth.tau_exponent},
             {"theta", c.truth.theta},        {"rho", c.truth.rho}, {"eps", c.truth.eps},
             {"site_seed", c.truth.site_seed}};
  if (c.truth.tau) truth["tau"] = *c.truth.tau;
  json grid = c.grid.explicit_values.empty() ? json{{"lo", c.grid.lo}, {"hi", c.grid.hi}, {"count", c.grid.count}}
                                             : json{{"values", c.grid.explicit_values}};
  json j{{"process", c.process},
         {"truth", truth},
         {"estimator", to_string(c.estimator)},
         {"grid", grid},
         {"grid_kind", c.grid_kind},
         {"n_list", c.n_list},
         {"p_list", c.p_list},
         {"replications", c.replications},
         {"master_seed", c.master_seed},
         {"bandwidth", {{"exponent", c.bandwidth_exponent},
                        {"t", c.t},
                        {"scheme", estim::to_string(c.scheme)},
                        {"kernel", estim::to_string(c.kernel)}}},
         {"scale_path", json::array({c.scale_path.a0, c.scale_path.a1})},
         {"glasso", {{"tol", c.glasso_tol}, {"max_iter", c.glasso_max_iter}, {"solver", glasso::to_string(c.solver)}}},
         {"spectral", c.spectral},
         {"timing", c.timing},
         {"center", c.center},
         {"constants", {{"c_g", c.c_g}, {"lambda", c.c_lambda}}}};
  if (c.pd_floor) j["pd_floor"] = *c.pd_floor;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  require(j.is_object(), "config: expected a JSON object");
  ExperimentConfig c;
  try {
    if (j.contains("process")) c.process = j.at("process");
    if (j.contains("truth")) {
      const auto& t = j.at("truth");
      c.truth.kind = t.value("kind", c.truth.kind);
      c.truth.K = t.value("K", c.truth.K);
      if (t.contains("tau")) c.truth.tau = t.at("tau").get<double>();
      c.truth.tau_exponent = t.value("tau_exponent", c.truth.tau_exponent);
      c.truth.theta = t.value("theta", c.truth.theta);
      c.truth.rho = t.value("rho", c.truth.rho);
      c.truth.eps = t.value("eps", c.truth.eps);
      c.truth.site_seed = t.value("site_seed", c.truth.site_seed);
    }
    if (j.contains("estimator")) c.estimator = parse_estimator(j.at("estimator").get<std::string>());
    if (j.contains("grid")) {
      const auto& g = j.at("grid");
      if (g.contains("values")) {
        c.grid.explicit_values = g.at("values").get<std::vector<double>>();
      } else {
        c.grid.lo = g.value("lo", c.grid.lo);
        c.grid.hi = g.value("hi", c.grid.hi);
        c.grid.count = g.value("count", c.grid.count);
      }
    }
    c.grid_kind = j.value("grid_kind", estimates_precision(c.estimator) ? std::string("lambda") : std::string("u"));
    if (j.contains("n_list")) c.n_list = j.at("n_list").get<std::vector<std::size_t>>();
    if (j.contains("p_list")) c.p_list = j.at("p_list").get<std::vector<std::size_t>>();
    c.replications = j.value("replications", c.replications);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (j.contains("bandwidth")) {
      const auto& b = j.at("bandwidth");
      c.bandwidth_exponent = b.value("exponent", c.bandwidth_exponent);
      c.t = b.value("t", c.t);
      const std::string scheme = b.value("scheme", "nadaraya_watson");
      require(scheme == "nadaraya_watson" || scheme == "local_linear", "unknown weight scheme '" + scheme + "'");
      c.scheme = scheme == "local_linear" ? estim::WeightScheme::local_linear : estim::WeightScheme::nadaraya_watson;
      const std::string kernel = b.value("kernel", "epanechnikov");
      require(kernel == "epanechnikov" || kernel == "flat", "unknown kernel '" + kernel + "'");
      c.kernel = kernel == "flat" ? estim::Kernel::flat : estim::Kernel::epanechnikov;
    }
    if (j.contains("scale_path")) {
      const auto& s = j.at("scale_path");
      require(s.is_array() && s.size() == 2, "scale_path must be [a0, a1]");
      c.scale_path = {s[0].get<double>(), s[1].get<double>()};
    }
    if (j.contains("glasso")) {
      const auto& g = j.at("glasso");
      c.glasso_tol = g.value("tol", c.glasso_tol);
      c.glasso_max_iter = g.value("max_iter", c.glasso_max_iter);
      const std::string solver = g.value("solver", "admm");
      require(solver == "proximal_gradient" || solver == "admm", "unknown glasso solver '" + solver + "'");
      c.solver = solver == "admm" ? glasso::Solver::admm : glasso::Solver::proximal_gradient;
    }
    if (j.contains("pd_floor")) c.pd_floor = j.at("pd_floor").get<double>();
    c.spectral = j.value("spectral", c.spectral);
    c.timing = j.value("timing", c.timing);
    c.center = j.value("center", c.center);
    if (j.contains("constants")) {
      c.c_g = j.at("constants").value("c_g", c.c_g);
      c.c_lambda = j.at("constants").value("lambda", c.c_lambda);
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// FNV-1a over the canonical dump (sorted keys, no whitespace).
inline std::string config_hash(const json& canonical) { return hash_hex(fnv1a64(canonical.dump())); }

// ---------------------------------------------------------------------------
// Truth construction
// ---------------------------------------------------------------------------

inline SymMatrix build_truth(const TruthSpec& t, std::size_t p) {
  if (t.kind == "identity") return SymMatrix::identity(p);
  if (t.kind == "tridiagonal") return covmodels::tridiagonal_cov(p, t.rho);
  if (t.kind == "counterexample") {
    const double eps = t.eps > 0.0 ? t.eps : 0.5 / std::sqrt(double(std::max<std::size_t>(p, 2) - 1));
    return covmodels::counterexample_matrix(p, eps);
  }
  const double tau = t.tau ? *t.tau : std::pow(double(p), t.tau_exponent);
  const auto sites = covmodels::uniform_sites(p, std::sqrt(double(p)), t.site_seed);
  if (t.kind == "rational_quadratic") return covmodels::rational_quadratic_cov(sites, t.K, tau);
  if (t.kind == "gamma_exponential") return covmodels::gamma_exponential_cov(sites, tau, t.theta);
  throw InvalidArgument("unknown truth kind '" + t.kind + "'");
}

struct TruthBundle {
  SymMatrix sigma;
  SymMatrix omega;
  Matrix root;      // Sigma^{1/2}
  Matrix whitener;  // base-process cov^{-1/2}; empty when the base is already white
};

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct ResultRow {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t rep = 0;
  double grid_value = 0.0;
  double frob_risk = 0.0;
  double spectral_err = 0.0;
  std::size_t kept = 0;
  double runtime_ms = 0.0;
};

struct Failure {
  std::size_t n = 0, p = 0, rep = 0;
  double grid_value = 0.0;
  std::string error;
};

struct AggregateRow {
  std::size_t n = 0, p = 0;
  double grid_value = 0.0;
  double mean_frob = 0.0, se_frob = 0.0;
  double mean_spectral = 0.0, se_spectral = 0.0;
  double mean_kept = 0.0;
  std::size_t failures = 0;
  bool optimal = false;
};

struct ExperimentResult {
  json config;  // canonical
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string started_at;
  std::vector<ResultRow> rows;
  std::vector<Failure> failures;
  std::vector<AggregateRow> aggregates;
  std::vector<double> grid;
  std::vector<std::size_t> n_list, p_list;
  std::size_t replications = 0;
};

inline double mean_of(const std::vector<double>& v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double se_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / double(v.size() - 1) / double(v.size()));
}

inline std::vector<AggregateRow> aggregate(const std::vector<ResultRow>& rows, const std::vector<double>& grid,
                                           const std::vector<std::size_t>& n_list,
                                           const std::vector<std::size_t>& p_list) {
  std::vector<AggregateRow> out;
  for (auto n : n_list)
    for (auto p : p_list) {
      const std::size_t first = out.size();
      for (double g : grid) {
        std::vector<double> fr, sp, kept;
        std::size_t fails = 0;
        for (const auto& r : rows) {
          if (r.n != n || r.p != p || r.grid_value != g) continue;
          if (std::isnan(r.frob_risk)) {
            ++fails;
            continue;
          }
          fr.push_back(r.frob_risk);
          if (!std::isnan(r.spectral_err)) sp.push_back(r.spectral_err);
          kept.push_back(double(r.kept));
        }
        out.push_back({n, p, g, mean_of(fr), se_of(fr), mean_of(sp), se_of(sp), mean_of(kept), fails, false});
      }
      std::size_t best = first;
      for (std::size_t i = first; i < out.size(); ++i)
        if (!std::isnan(out[i].mean_frob) && (std::isnan(out[best].mean_frob) || out[i].mean_frob < out[best].mean_frob))
          best = i;
      if (best < out.size() && !std::isnan(out[best].mean_frob)) out[best].optimal = true;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

inline std::size_t default_workers() {
  if (const char* env = std::getenv("COVTS_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    require(end != env && *end == '\0' && v > 0, "COVTS_WORKERS must be a positive integer");
    return std::size_t(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

inline TruthBundle make_truth(const ExperimentConfig& cfg, std::size_t p) {
  TruthBundle tb;
  tb.sigma = build_truth(cfg.truth, p);
  const auto eig = linalg::sym_eigen(tb.sigma);
  require(eig.values(0) > 0.0, "truth covariance is not positive definite");
  tb.root = linalg::spectral_map(eig, [](double x) { return std::sqrt(x); });
  tb.omega = SymMatrix::symmetrize(linalg::spectral_map(eig, [](double x) { return 1.0 / x; }));

  json pj = cfg.process;
  pj["p"] = p;
  const auto base = io::process_from_json(pj);
  require(base.kind() != procsim::ProcessKind::modulated && base.kind() != procsim::ProcessKind::nonstat_linear,
          "experiment process must be stationary; time variation comes from scale_path");
  const Matrix cov = procsim::stationary_cov(base);
  if (!cov.isIdentity(0.0)) tb.whitener = linalg::sym_inverse_sqrt(cov);
  return tb;
}

struct CellOutput {
  std::vector<ResultRow> rows;
  std::vector<Failure> failures;
};

inline DataMatrix simulate_cell(const ExperimentConfig& cfg, const TruthBundle& tb, std::size_t n, std::size_t p,
                                std::uint64_t seed) {
  json pj = cfg.process;
  pj["p"] = p;
  auto spec = io::process_from_json(pj);
  spec.seed = seed;
  Matrix y = procsim::simulate(spec, n).values();
  if (tb.whitener.size()) y = tb.whitener * y;
  Matrix z = tb.sigma.dim() && !tb.sigma.dense().isIdentity(0.0) ? Matrix(tb.root * y) : y;
  if (time_varying(cfg.estimator)) {
    for (std::size_t i = 0; i < n; ++i) {
      const double s = cfg.scale_path(double(i + 1) / double(n));
      require(s > 0.0, "scale_path must stay positive on (0, 1]");
      z.col(Eigen::Index(i)) *= std::sqrt(s);
    }
  }
  return DataMatrix(std::move(z));
}

inline std::size_t count_nonzero(const SymMatrix& m) {
  std::size_t c = 0;
  m.for_each_weighted([&](std::size_t, std::size_t, double v, double w) {
    if (v != 0.0) c += std::size_t(w);
  });
  return c;
}

inline CellOutput run_cell(const ExperimentConfig& cfg, const TruthBundle& tb, const std::vector<double>& grid,
                           std::size_t n, std::size_t p, std::size_t rep, std::uint64_t seed) {
  CellOutput out;
  const DataMatrix z = simulate_cell(cfg, tb, n, p, seed);
  const bool tv = time_varying(cfg.estimator);
  const double b = std::min(1.0, std::pow(double(n), -cfg.bandwidth_exponent));
  const SymMatrix s = tv ? estim::kernel_cov(z, cfg.t, b, cfg.scheme, cfg.kernel) : estim::sample_cov(z, cfg.center);

  SymMatrix target = estimates_precision(cfg.estimator) ? tb.omega : tb.sigma;
  if (tv) {
    const double scale = cfg.scale_path(cfg.t);
    target = estimates_precision(cfg.estimator) ? (1.0 / scale) * target : scale * target;
  }

  glasso::GlassoOptions gopt;
  gopt.tol = cfg.glasso_tol;
  gopt.max_iter = cfg.glasso_max_iter;
  gopt.solver = cfg.solver;

  for (double g : grid) {
    ResultRow row{n, p, rep, g, 0.0, 0.0, 0, 0.0};
    const auto start = std::chrono::steady_clock::now();
    try {
      SymMatrix est;
      switch (cfg.estimator) {
        case Estimator::threshold_cov:
        case Estimator::kernel_cov_threshold: {
          auto t = estim::threshold(s, g);
          row.kept = t.kept;
          est = std::move(t.matrix);
          break;
        }
        case Estimator::pd_threshold_cov: {
          auto t = estim::threshold(s, g);
          const double v = cfg.pd_floor ? *cfg.pd_floor : estim::default_pd_floor(t);
          est = estim::positive_definitize(t.matrix, std::max(v, std::numeric_limits<double>::min()));
          row.kept = count_nonzero(est);
          break;
        }
        case Estimator::glasso:
        case Estimator::tv_glasso:
        case Estimator::glasso_corr: {
          const double lambda = cfg.grid_kind == "u" ? glasso::lambda_from_threshold(g, cfg.c_lambda) : g;
          auto sol = cfg.estimator == Estimator::glasso_corr ? glasso::glasso_correlation_variant(s, lambda, gopt)
                                                             : glasso::glasso_fit(s, lambda, gopt);
          est = std::move(sol.omega);
          row.kept = count_nonzero(est);
          break;
        }
      }
      row.frob_risk = estim::frob_err(est, target);
      row.spectral_err = cfg.spectral ? estim::spectral_err(est, target) : std::numeric_limits<double>::quiet_NaN();
    } catch (const NonConvergence& e) {
      row.frob_risk = row.spectral_err = std::numeric_limits<double>::quiet_NaN();
      row.kept = 0;
      out.failures.push_back({n, p, rep, g, e.what()});
    }
    if (cfg.timing)
      row.runtime_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.rows.push_back(row);
  }
  return out;
}

}  // namespace detail

// Runs every (n, p, replication) cell. Cell k gets the stream seed
// derive_seed(master_seed, k), k = ((n_index * |p_list|) + p_index) * reps + rep,
// so results do not depend on the number of workers or on scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::size_t workers = 0) {
  cfg.validate();
  ExperimentResult res;
  res.config = to_json(cfg);
  res.config_hash = config_hash(res.config);
  res.seed = cfg.master_seed;
  res.started_at = utc_timestamp();
  res.grid = cfg.grid.values();
  res.n_list = cfg.n_list;
  res.p_list = cfg.p_list;
  res.replications = cfg.replications;

  std::map<std::size_t, TruthBundle> truths;
  for (auto p : cfg.p_list)
    if (!truths.count(p)) truths.emplace(p, detail::make_truth(cfg, p));

  const std::size_t np = cfg.p_list.size(), reps = cfg.replications;
  const std::size_t cells = cfg.n_list.size() * np * reps;
  std::vector<detail::CellOutput> outputs(cells);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= cells) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (error) return;
      }
      const std::size_t rep = k % reps, pi = (k / reps) % np, ni = k / (reps * np);
      const std::size_t n = cfg.n_list[ni], p = cfg.p_list[pi];
      try {
        outputs[k] = detail::run_cell(cfg, truths.at(p), res.grid, n, p, rep, derive_seed(cfg.master_seed, k));
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };

  if (workers == 0) workers = default_workers();
  workers = std::min(workers, cells);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  for (auto& o : outputs) {
    res.rows.insert(res.rows.end(), o.rows.begin(), o.rows.end());
    res.failures.insert(res.failures.end(), o.failures.begin(), o.failures.end());
  }
  res.aggregates = aggregate(res.rows, res.grid, res.n_list, res.p_list);
  return res;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline std::string rows_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "n,p,rep,grid_value,frob_risk,spectral_err,kept,runtime_ms\n";
  for (const auto& row : r.rows)
    os << row.n << ',' << row.p << ',' << row.rep << ',' << io::format_double(row.grid_value) << ','
       << io::format_double(row.frob_risk) << ',' << io::format_double(row.spectral_err) << ',' << row.kept << ','
       << io::format_double(row.runtime_ms) << '\n';
  return os.str();
}

inline std::string aggregate_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "n,p,grid_value,mean_frob_risk,se_frob_risk,mean_spectral_err,se_spectral_err,mean_kept,failures,optimal\n";
  for (const auto& a : r.aggregates)
    os << a.n << ',' << a.p << ',' << io::format_double(a.grid_value) << ',' << io::format_double(a.mean_frob) << ','
       << io::format_double(a.se_frob) << ',' << io::format_double(a.mean_spectral) << ','
       << io::format_double(a.se_spectral) << ',' << io::format_double(a.mean_kept) << ',' << a.failures << ','
       << (a.optimal ? 1 : 0) << '\n';
  return os.str();
}

inline json meta_json(const ExperimentResult& r) {
  json failures = json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"n", f.n}, {"p", f.p}, {"rep", f.rep}, {"grid_value", f.grid_value}, {"error", f.error}});
  return {{"config_hash", r.config_hash},
          {"seed", r.seed},
          {"version", kVersion},
          {"started_at", r.started_at},
          {"config", r.config},
          {"failures", failures},
          {"notes",
           {{"constants", "unspecified rate constants are 1; multipliers under config.constants"},
            {"innovations", "gaussian unless config.process.innovations selects student_t"}}}};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  auto out = io::open_out(path.string());
  out << text;
  io::check_written(out, path.string());
}

inline void write_result(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "rows.csv", rows_csv(r));
  write_text(dir / "aggregate.csv", aggregate_csv(r));
  write_text(dir / "meta.json", meta_json(r).dump(2) + "\n");
}

// Recomputes the hash of the stored config; false means the file was edited.
inline bool verify_meta(const json& meta) {
  return meta.contains("config") && meta.contains("config_hash") &&
         config_hash(meta.at("config")) == meta.at("config_hash").get<std::string>();
}

// ---------------------------------------------------------------------------
// Cross-validated threshold
// ---------------------------------------------------------------------------

struct CvResult {
  double u = 0.0;
  std::vector<double> grid;
  std::vector<double> mean_score;
  std::vector<std::size_t> cuts;
};

// Each split cuts the time axis once, uniformly in the middle third; T_u of
// the first block's sample covariance is scored against the second block's
// by squared Frobenius distance. Ties go to the larger u.
inline CvResult cv_threshold(const DataMatrix& z, std::vector<double> grid, std::size_t splits, std::uint64_t seed,
                             bool center = false) {
  require(z.n() >= 4, "cv_threshold: need n >= 4");
  require(!grid.empty(), "cv_threshold: grid must be nonempty");
  require(splits >= 1, "cv_threshold: need at least one split");
  std::sort(grid.begin(), grid.end());
  const std::size_t n = z.n();
  const std::size_t lo = (n + 2) / 3, hi = (2 * n) / 3;
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> cut_dist(std::max<std::size_t>(lo, 1), std::max(hi, std::max<std::size_t>(lo, 1)));

  CvResult out;
  out.grid = grid;
  out.mean_score.assign(grid.size(), 0.0);
  const auto& x = z.values();
  for (std::size_t s = 0; s < splits; ++s) {
    const std::size_t cut = std::min(cut_dist(rng), n - 1);
    out.cuts.push_back(cut);
    const SymMatrix s1 = estim::sample_cov(DataMatrix(x.leftCols(Eigen::Index(cut))), center);
    const SymMatrix s2 = estim::sample_cov(DataMatrix(x.rightCols(Eigen::Index(n - cut))), center);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const double p = double(s1.dim());
      out.mean_score[g] += estim::frob_err(estim::threshold(s1, grid[g]).matrix, s2) * p * p / double(splits);
    }
  }
  std::size_t best = 0;
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (out.mean_score[g] <= out.mean_score[best]) best = g;
  out.u = grid[best];
  return out;
}

// ---------------------------------------------------------------------------
// Trend verdicts
// ---------------------------------------------------------------------------

enum class Claim { slope, risk_dominance, threshold_ordering };

inline Claim parse_claim(const std::string& s) {
  if (s == "slope") return Claim::slope;
  if (s == "risk_dominance") return Claim::risk_dominance;
  if (s == "threshold_ordering") return Claim::threshold_ordering;
  throw InvalidArgument("unknown claim '" + s + "'");
}

struct TrendOptions {
  double target = -1.0;  // slope claim: expected slope
  double tolerance = 0.25;
  double level = 0.90;  // bootstrap interval coverage
  std::size_t bootstrap = 500;
  std::uint64_t seed = 12345;
};

struct Verdict {
  std::string claim;
  double statistic = 0.0;
  double se = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool pass = false;
  std::string detail;
  std::vector<double> values;  // per-input summary (min risk or optimal u)
};

namespace detail {

// Per-replication risk tables for one (n, p): risk[rep][grid]
inline std::vector<std::vector<double>> risk_table(const ExperimentResult& r, std::size_t n, std::size_t p) {
  std::vector<std::vector<double>> t(r.replications, std::vector<double>(r.grid.size(), std::numeric_limits<double>::quiet_NaN()));
  for (const auto& row : r.rows) {
    if (row.n != n || row.p != p) continue;
    const auto g = std::size_t(std::lower_bound(r.grid.begin(), r.grid.end(), row.grid_value) - r.grid.begin());
    t[row.rep][g] = row.frob_risk;
  }
  return t;
}

// min over the grid of the mean risk across the chosen replications (NaN rows skipped)
inline std::pair<double, std::size_t> min_mean_risk(const std::vector<std::vector<double>>& t,
                                                    const std::vector<std::size_t>& reps) {
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  const std::size_t G = t.empty() ? 0 : t[0].size();
  for (std::size_t g = 0; g < G; ++g) {
    double s = 0.0;
    std::size_t c = 0;
    for (auto r : reps)
      if (!std::isnan(t[r][g])) {
        s += t[r][g];
        ++c;
      }
    if (c && s / double(c) < best) {
      best = s / double(c);
      arg = g;
    }
  }
  return {best, arg};
}

inline std::vector<std::size_t> iota_reps(std::size_t k) {
  std::vector<std::size_t> v(k);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const double pos = q * double(v.size() - 1);
  const auto i = std::size_t(std::floor(pos));
  const double f = pos - double(i);
  return i + 1 < v.size() ? v[i] * (1.0 - f) + v[i + 1] * f : v[i];
}

inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

// Bootstrap distribution of the min-mean risk for one (n, p) table.
inline std::vector<double> bootstrap_min_risk(const std::vector<std::vector<double>>& t, std::size_t B, Rng& rng) {
  std::vector<double> out;
  std::uniform_int_distribution<std::size_t> pick(0, t.size() - 1);
  std::vector<std::size_t> reps(t.size());
  for (std::size_t b = 0; b < B; ++b) {
    for (auto& r : reps) r = pick(rng);
    out.push_back(min_mean_risk(t, reps).first);
  }
  return out;
}

}  // namespace detail

// slope:              results pooled over one p; OLS slope of log(min mean risk) vs log n,
//                     pass when |slope - target| <= tolerance.
// risk_dominance:     results[0] should have strictly larger min risk than results[1];
//                     pass when their bootstrap intervals are disjoint in that order.
// threshold_ordering: the empirically optimal grid value should be nondecreasing
//                     along the results list.
inline Verdict trend_report(const std::vector<ExperimentResult>& results, Claim claim, const TrendOptions& opt = {}) {
  require(!results.empty(), "trend_report: no results");
  Verdict v;
  Rng rng(opt.seed);
  const double tail = (1.0 - opt.level) / 2.0;

  if (claim == Claim::slope) {
    v.claim = "slope";
    std::vector<std::tuple<double, std::size_t, const ExperimentResult*>> pts;  // (n, p, result)
    for (const auto& r : results)
      for (auto n : r.n_list)
        for (auto p : r.p_list) pts.emplace_back(double(n), p, &r);
    const std::size_t p0 = std::get<1>(pts.front());
    for (const auto& pt : pts)
      require(std::get<1>(pt) == p0, "trend_report: slope claim needs a single p across results");
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return std::get<0>(a) < std::get<0>(b); });
    for (std::size_t i = 1; i < pts.size(); ++i)
      require(std::get<0>(pts[i]) != std::get<0>(pts[i - 1]), "trend_report: duplicate n across results");
    require(pts.size() >= 2, "trend_report: slope claim needs at least two sample sizes");

    std::vector<std::vector<std::vector<double>>> tables;
    std::vector<double> x, y;
    for (const auto& [n, p, r] : pts) {
      tables.push_back(detail::risk_table(*r, std::size_t(n), p));
      x.push_back(std::log(n));
      const double m = detail::min_mean_risk(tables.back(), detail::iota_reps(tables.back().size())).first;
      v.values.push_back(m);
      y.push_back(std::log(m));
    }
    v.statistic = detail::ols_slope(x, y);
    std::vector<double> boot;
    for (std::size_t b = 0; b < opt.bootstrap; ++b) {
      std::vector<double> yb;
      for (const auto& t : tables) yb.push_back(std::log(detail::bootstrap_min_risk(t, 1, rng).front()));
      boot.push_back(detail::ols_slope(x, yb));
    }
    v.se = std::sqrt(std::max(0.0, [&] {
      const double m = mean_of(boot);
      double s = 0.0;
      for (double b : boot) s += (b - m) * (b - m);
      return boot.size() > 1 ? s / double(boot.size() - 1) : 0.0;
    }()));
    v.lo = detail::quantile(boot, tail);
    v.hi = detail::quantile(boot, 1.0 - tail);
    v.pass = std::abs(v.statistic - opt.target) <= opt.tolerance;
    v.detail = "slope " + io::format_double(v.statistic) + " vs target " + io::format_double(opt.target) + " +- " +
               io::format_double(opt.tolerance);
    return v;
  }

  if (claim == Claim::risk_dominance) {
    v.claim = "risk_dominance";
    require(results.size() == 2, "trend_report: risk_dominance compares exactly two results");
    std::vector<double> lo(2), hi(2), mins(2);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto& r = results[i];
      require(r.n_list.size() == 1 && r.p_list.size() == 1, "trend_report: risk_dominance needs one (n, p) per result");
      const auto t = detail::risk_table(r, r.n_list[0], r.p_list[0]);
      mins[i] = detail::min_mean_risk(t, detail::iota_reps(t.size())).first;
      const auto boot = detail::bootstrap_min_risk(t, opt.bootstrap, rng);
      lo[i] = detail::quantile(boot, tail);
      hi[i] = detail::quantile(boot, 1.0 - tail);
    }
    v.values = mins;
    v.statistic = mins[0] - mins[1];
    v.lo = lo[0] - hi[1];  // gap between the intervals; positive when disjoint in the claimed order
    v.hi = hi[0] - lo[1];
    v.pass = v.statistic > 0.0 && lo[0] > hi[1];
    v.detail = "interval A [" + io::format_double(lo[0]) + ", " + io::format_double(hi[0]) + "] vs B [" +
               io::format_double(lo[1]) + ", " + io::format_double(hi[1]) + "]";
    return v;
  }

  v.claim = "threshold_ordering";
  for (const auto& r : results) {
    require(r.n_list.size() == 1 && r.p_list.size() == 1, "trend_report: threshold_ordering needs one (n, p) per result");
    const auto t = detail::risk_table(r, r.n_list[0], r.p_list[0]);
    v.values.push_back(r.grid[detail::min_mean_risk(t, detail::iota_reps(t.size())).second]);
  }
  v.pass = std::is_sorted(v.values.begin(), v.values.end());
  v.statistic = v.values.back() - v.values.front();
  v.detail = v.pass ? "optimal grid values nondecreasing" : "ordering violated";
  return v;
}

// ---------------------------------------------------------------------------
// Rate curves and SVG
// ---------------------------------------------------------------------------

struct Series {
  std::string name;
  std::string color;
  std::vector<double> y;
};

struct Marker {
  std::string name;
  double x = 0.0;
};

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

// Self-contained log-log line plot.
inline std::string svg_loglog(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series,
                              const std::vector<Marker>& markers) {
  constexpr double W = 720, Hh = 460, ml = 70, mr = 150, mt = 40, mb = 50;
  double ymax = 0.0;
  for (const auto& s : series)
    for (double v : s.y)
      if (v > 0.0 && std::isfinite(v)) ymax = std::max(ymax, v);
  if (ymax <= 0.0) ymax = 1.0;
  double ymin = ymax;
  for (const auto& s : series)
    for (double v : s.y)
      if (v > 0.0 && std::isfinite(v)) ymin = std::min(ymin, v);
  ymin = std::max(ymin, ymax * 1e-16);
  const double lx0 = std::log10(x.front()), lx1 = std::log10(x.back());
  const double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  auto px = [&](double v) { return ml + (std::log10(v) - lx0) / (lx1 - lx0) * (W - ml - mr); };
  auto py = [&](double v) {
    const double lv = std::clamp(std::log10(std::max(v, ymin)), ly0, ly1);
    return mt + (ly1 - lv) / (ly1 - ly0) * (Hh - mt - mb);
  };
  std::ostringstream os;
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh << "\" viewBox=\"0 0 " << W
     << ' ' << Hh << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << svg_escape(title)
     << "</text>\n";
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << W - ml - mr << "\" height=\"" << Hh - mt - mb
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = int(std::ceil(lx0)); e <= int(std::floor(lx1)); ++e) {
    const double xv = px(std::pow(10.0, e));
    os << "<line x1=\"" << xv << "\" y1=\"" << Hh - mb << "\" x2=\"" << xv << "\" y2=\"" << Hh - mb + 5
       << "\" stroke=\"black\"/><text x=\"" << xv << "\" y=\"" << Hh - mb + 18 << "\" text-anchor=\"middle\">1e" << e
       << "</text>\n";
  }
  const int ystep = std::max(1, int((ly1 - ly0) / 8));
  for (int e = int(ly0); e <= int(ly1); e += ystep) {
    const double yv = py(std::pow(10.0, e));
    os << "<line x1=\"" << ml - 5 << "\" y1=\"" << yv << "\" x2=\"" << ml << "\" y2=\"" << yv
       << "\" stroke=\"black\"/><text x=\"" << ml - 8 << "\" y=\"" << yv + 4 << "\" text-anchor=\"end\">1e" << e
       << "</text>\n";
  }
  os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << Hh - 10 << "\" text-anchor=\"middle\">u</text>\n";
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < x.size(); ++i) os << px(x[i]) << ',' << py(s.y[i]) << ' ';
    os << "\"/>\n";
  }
  for (const auto& m : markers) {
    if (!(m.x >= x.front() && m.x <= x.back())) continue;
    const double xv = px(m.x);
    os << "<line x1=\"" << xv << "\" y1=\"" << mt << "\" x2=\"" << xv << "\" y2=\"" << Hh - mb
       << "\" stroke=\"gray\" stroke-dasharray=\"4,3\"/><text x=\"" << xv + 3 << "\" y=\"" << mt + 12 << "\">"
       << svg_escape(m.name) << "</text>\n";
  }
  double ly = mt + 10;
  for (const auto& s : series) {
    os << "<line x1=\"" << W - mr + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - mr + 35 << "\" y2=\"" << ly
       << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/><text x=\"" << W - mr + 40 << "\" y=\"" << ly + 4
       << "\">" << svg_escape(s.name) << "</text>\n";
    ly += 18;
  }
  os << "</svg>\n";
  return os.str();
}

struct CurveTable {
  std::vector<double> u, D, H, G, G_tilde, bound;
  rates::ThresholdMarkers markers;
};

inline constexpr std::size_t kCurvePoints = 200;

// Log grid on [n^{-1/2} / 10, max(1, 2 max|s|)].
inline CurveTable rate_curves(const rates::RateProfile& prof, const SymMatrix& truth) {
  CurveTable c;
  const double lo = 0.1 / std::sqrt(prof.n), hi = std::max(1.0, 2.0 * truth.max_abs());
  const rates::SmallnessModel m = &truth;
  for (std::size_t i = 0; i < kCurvePoints; ++i) {
    double u = std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * double(i) / double(kCurvePoints - 1));
    if (i == 0) u = lo;
    if (i + 1 == kCurvePoints) u = hi;
    c.u.push_back(u);
    c.D.push_back(rates::D_of(u, prof, m));
    c.H.push_back(rates::H(u, prof));
    c.G.push_back(rates::G(u, prof));
    c.G_tilde.push_back(rates::G_tilde(u, prof));
    c.bound.push_back(rates::risk_upper_bound(u, prof, m, rates::RiskVariant::stationary_cov));
  }
  c.markers = rates::threshold_markers(prof, truth);
  return c;
}

inline json markers_json(const rates::ThresholdMarkers& mk) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"u_diamond", opt(mk.u_diamond)},
          {"u_dagger", opt(mk.u_dagger)},
          {"u_circ", opt(mk.u_circ)},
          {"u_natural", mk.u_natural},
          {"rate_natural", mk.rate_natural}};
}

// Writes <stem>.csv and <stem>.svg; returns the curve table.
inline CurveTable emit_rate_curves(const rates::RateProfile& prof, const SymMatrix& truth,
                                   const std::filesystem::path& dir, const std::string& stem,
                                   const std::string& title = "") {
  std::filesystem::create_directories(dir);
  CurveTable c = rate_curves(prof, truth);
  std::ostringstream csv;
  csv << "u,D,H,G,G_tilde,bound\n";
  for (std::size_t i = 0; i < c.u.size(); ++i)
    csv << io::format_double(c.u[i]) << ',' << io::format_double(c.D[i]) << ',' << io::format_double(c.H[i]) << ','
        << io::format_double(c.G[i]) << ',' << io::format_double(c.G_tilde[i]) << ','
        << io::format_double(c.bound[i]) << '\n';
  write_text(dir / (stem + ".csv"), csv.str());

  std::vector<Marker> marks;
  if (c.markers.u_diamond) marks.push_back({"u_diamond", *c.markers.u_diamond});
  if (c.markers.u_dagger) marks.push_back({"u_dagger", *c.markers.u_dagger});
  if (c.markers.u_circ) marks.push_back({"u_circ", *c.markers.u_circ});
  marks.push_back({"u_natural", c.markers.u_natural});
  const std::vector<Series> series{{"D(u)", "#1f77b4", c.D},
                                   {"H(u)", "#d62728", c.H},
                                   {"G(u)", "#2ca02c", c.G},
                                   {"bound", "#000000", c.bound}};
  write_text(dir / (stem + ".svg"), svg_loglog(title.empty() ? stem : title, c.u, series, marks));
  return c;
}

// ---------------------------------------------------------------------------
// Figure preset: rational-quadratic truth on uniform sites, three length
// scales, weak and strong temporal dependence.
// ---------------------------------------------------------------------------

struct Fig2Options {
  std::size_t n = 100;
  std::size_t p = 200;
  double K = 4.0;
  double q = 4.0;
  double alpha_weak = 0.3;
  double alpha_strong = 0.125;
  std::uint64_t site_seed = 1;
};

struct Fig2Entry {
  std::string stem;
  double tau_exponent = 0.0;
  double alpha = 0.0;
  rates::ThresholdMarkers markers;
};

inline const std::array<std::pair<const char*, double>, 3> kFig2Taus{
    {{"tau_p1_3", 1.0 / 3.0}, {"tau_p1_6", 1.0 / 6.0}, {"tau_p1_9", 1.0 / 9.0}}};

// Computes the six curve sets; writes files when `dir` is nonempty.
inline std::vector<Fig2Entry> run_fig2(const Fig2Options& o, const std::filesystem::path& dir = {}) {
  const auto sites = covmodels::uniform_sites(o.p, std::sqrt(double(o.p)), o.site_seed);
  std::vector<Fig2Entry> out;
  json markers = json::object();
  for (const auto& [tag, e] : kFig2Taus) {
    const SymMatrix sigma = covmodels::rational_quadratic_cov(sites, o.K, std::pow(double(o.p), e));
    for (const auto& [rtag, alpha] : {std::pair{"weak", o.alpha_weak}, std::pair{"strong", o.alpha_strong}}) {
      const auto prof = rates::RateProfile::make(double(o.n), double(o.p), o.q, alpha);
      Fig2Entry entry{std::string(tag) + "_" + rtag, e, alpha, {}};
      if (dir.empty()) {
        entry.markers = rates::threshold_markers(prof, sigma);
      } else {
        entry.markers = emit_rate_curves(prof, sigma, dir, entry.stem,
                                         entry.stem + " (n=" + std::to_string(o.n) + ", p=" + std::to_string(o.p) +
                                             ", alpha=" + io::format_double(alpha) + ")")
                            .markers;
      }
      markers[entry.stem] = markers_json(entry.markers);
      out.push_back(std::move(entry));
    }
  }
  if (!dir.empty()) {
    write_text(dir / "fig2_markers.json", markers.dump(2) + "\n");
    json meta{{"version", kVersion},
              {"started_at", utc_timestamp()},
              {"n", o.n},
              {"p", o.p},
              {"K", o.K},
              {"q", o.q},
              {"alpha_weak", o.alpha_weak},
              {"alpha_strong", o.alpha_strong},
              {"site_seed", o.site_seed},
              {"sites", "uniform on [0, p^{1/2}]^2"},
              {"constants", "all rate constants set to 1; G evaluated at u"},
              {"u_natural", "argmin over u >= n^{-1/2} of max(D, H, G)"}};
    write_text(dir / "meta.json", meta.dump(2) + "\n");
  }
  return out;
}

}  // namespace covts::harness
