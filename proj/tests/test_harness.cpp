#include "covts/harness.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace covts;
using namespace covts::harness;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.process = {{"kind", "var1"}, {"burn_in", 10}};
  c.truth.kind = "tridiagonal";
  c.truth.rho = 0.3;
  c.grid.lo = 0.05;
  c.grid.hi = 0.8;
  c.grid.count = 6;
  c.n_list = {40, 80};
  c.p_list = {5, 8};
  c.replications = 3;
  c.master_seed = 17;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Result with rows for one p and a known risk surface.
ExperimentResult synthetic(const std::vector<std::size_t>& ns, std::size_t reps,
                           const std::function<double(std::size_t, double, std::size_t)>& risk) {
  ExperimentResult r;
  r.grid = {0.1, 0.2, 0.4};
  r.n_list = ns;
  r.p_list = {10};
  r.replications = reps;
  for (auto n : ns)
    for (std::size_t rep = 0; rep < reps; ++rep)
      for (double g : r.grid) r.rows.push_back({n, 10, rep, g, risk(n, g, rep), 0.0, 0, 0.0});
  return r;
}

}  // namespace

TEST(Config, RoundTripAndHash) {
  const auto c = small_config();
  const json j = to_json(c);
  const auto back = config_from_json(json::parse(j.dump()));
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(j), config_hash(to_json(back)));
  auto c2 = c;
  c2.master_seed = 18;
  EXPECT_NE(config_hash(to_json(c2)), config_hash(j));
  EXPECT_EQ(config_hash(j).size(), 16u);
}

TEST(Config, Validation) {
  EXPECT_THROW(config_from_json(json{{"estimator", "lasso"}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"grid", {{"values", {0.3, 0.2}}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"grid", {{"lo", -1.0}}}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"n_list", json::array()}}), InvalidArgument);
  EXPECT_THROW(config_from_json(json{{"replications", "many"}}), InvalidArgument);
  EXPECT_EQ(config_from_json(json{{"estimator", "glasso"}}).grid_kind, "lambda");
  EXPECT_EQ(config_from_json(json::object()).grid_kind, "u");
}

TEST(Grid, GeometricEndpoints) {
  GridSpec g;
  g.lo = 0.01;
  g.hi = 1.0;
  g.count = 3;
  const auto v = g.values();
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v.front(), 0.01);
  EXPECT_EQ(v.back(), 1.0);
  EXPECT_NEAR(v[1], 0.1, 1e-15);
}

TEST(Truth, Kinds) {
  TruthSpec t;
  EXPECT_TRUE(build_truth(t, 4).dense().isIdentity(0.0));
  t.kind = "rational_quadratic";
  t.tau = 1.0;
  const auto rq = build_truth(t, 9);
  EXPECT_EQ(rq(3, 3), 1.0);
  EXPECT_GT(rq(1, 0), 0.0);
  t.kind = "counterexample";
  EXPECT_NEAR(build_truth(t, 5)(2, 0), 0.25, 1e-15);
  t.kind = "nope";
  EXPECT_THROW(build_truth(t, 3), InvalidArgument);
}

TEST(Experiment, RowsLayoutAndAggregates) {
  const auto cfg = small_config();
  const auto res = run_experiment(cfg, 1);
  EXPECT_EQ(res.rows.size(), 2u * 2u * 3u * 6u);
  EXPECT_EQ(res.rows.front().n, 40u);
  EXPECT_EQ(res.rows.front().p, 5u);
  EXPECT_EQ(res.rows.front().grid_value, 0.05);
  EXPECT_TRUE(res.failures.empty());
  for (const auto& r : res.rows) {
    EXPECT_GE(r.frob_risk, 0.0);
    EXPECT_EQ(r.runtime_ms, 0.0);
  }
  const std::string csv = rows_csv(res);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "n,p,rep,grid_value,frob_risk,spectral_err,kept,runtime_ms");
  EXPECT_EQ(res.aggregates.size(), 2u * 2u * 6u);
  std::size_t optimal = 0;
  for (const auto& a : res.aggregates) optimal += a.optimal;
  EXPECT_EQ(optimal, 4u);
}

TEST(Experiment, SerialAndParallelIdentical) {
  auto cfg = small_config();
  const auto serial = run_experiment(cfg, 1);
  const auto parallel = run_experiment(cfg, 4);
  EXPECT_EQ(rows_csv(serial), rows_csv(parallel));
  EXPECT_EQ(aggregate_csv(serial), aggregate_csv(parallel));
}

TEST(Experiment, WorkerEnvironment) {
  ::setenv("COVTS_WORKERS", "3", 1);
  EXPECT_EQ(default_workers(), 3u);
  ::setenv("COVTS_WORKERS", "zero", 1);
  EXPECT_THROW(default_workers(), InvalidArgument);
  ::unsetenv("COVTS_WORKERS");
  EXPECT_GE(default_workers(), 1u);
}

TEST(Experiment, FailedCellsAreFlagged) {
  auto cfg = small_config();
  cfg.estimator = Estimator::glasso;
  cfg.grid_kind = "lambda";
  cfg.glasso_max_iter = 1;
  cfg.glasso_tol = 1e-14;
  cfg.n_list = {40};
  cfg.p_list = {5};
  cfg.replications = 1;
  const auto res = run_experiment(cfg, 1);
  EXPECT_FALSE(res.failures.empty());
  std::size_t nan_rows = 0;
  for (const auto& r : res.rows) nan_rows += std::isnan(r.frob_risk);
  EXPECT_EQ(nan_rows, res.failures.size());
  EXPECT_NE(rows_csv(res).find("nan"), std::string::npos);
}

TEST(Experiment, PrecisionAndTimeVaryingEstimators) {
  for (auto est : {Estimator::pd_threshold_cov, Estimator::glasso, Estimator::glasso_corr,
                   Estimator::kernel_cov_threshold, Estimator::tv_glasso}) {
    auto cfg = small_config();
    cfg.estimator = est;
    cfg.grid_kind = "u";
    cfg.n_list = {200};
    cfg.p_list = {4};
    cfg.replications = 2;
    cfg.timing = true;
    const auto res = run_experiment(cfg, 1);
    EXPECT_TRUE(res.failures.empty()) << to_string(est);
    for (const auto& r : res.rows) {
      EXPECT_TRUE(std::isfinite(r.frob_risk)) << to_string(est);
      EXPECT_GE(r.runtime_ms, 0.0);
    }
  }
}

TEST(Experiment, LinearBaseIsWhitened) {
  auto cfg = small_config();
  cfg.process = {{"kind", "linear_decay"}, {"decay", 1.0}, {"truncation", 50}, {"mixing", "circulant"}};
  cfg.truth.kind = "identity";
  cfg.grid.explicit_values = {1e-9};
  cfg.n_list = {20000};
  cfg.p_list = {3};
  cfg.replications = 1;
  const auto res = run_experiment(cfg, 1);
  EXPECT_LT(res.rows.front().frob_risk, 0.01);
}

TEST(Experiment, OutputsAndTamperDetection) {
  const auto dir = std::filesystem::temp_directory_path() / "covts_harness_test";
  std::filesystem::remove_all(dir);
  const auto res = run_experiment(small_config(), 1);
  write_result(res, dir);
  EXPECT_EQ(slurp(dir / "rows.csv"), rows_csv(res));
  json meta = json::parse(slurp(dir / "meta.json"));
  for (const char* k : {"config_hash", "seed", "version", "started_at", "config"}) EXPECT_TRUE(meta.contains(k)) << k;
  EXPECT_TRUE(verify_meta(meta));
  EXPECT_EQ(config_from_json(meta["config"]).master_seed, 17u);
  meta["config"]["replications"] = 4;
  EXPECT_FALSE(verify_meta(meta));
}

TEST(CrossValidation, TiesGoToLargerThreshold) {
  Rng rng(5);
  std::normal_distribution<double> g;
  Matrix a(4, 60);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  // every grid value kills every entry, so all scores tie
  const auto cv = cv_threshold(DataMatrix(a), {50.0, 60.0, 70.0}, 5, 1);
  EXPECT_EQ(cv.u, 70.0);
  for (auto cut : cv.cuts) {
    EXPECT_GE(cut, 20u);
    EXPECT_LE(cut, 40u);
  }
  EXPECT_THROW(cv_threshold(DataMatrix(Matrix::Ones(2, 3)), {0.1}, 1, 1), InvalidArgument);
}

TEST(CrossValidation, PrefersSmallThresholdOnDenseTruth) {
  Rng rng(6);
  std::normal_distribution<double> g;
  // strongly correlated pair: thresholding the off-diagonal away is costly
  Matrix a(2, 2000);
  for (Eigen::Index i = 0; i < 2000; ++i) {
    const double x = g(rng);
    a(0, i) = x;
    a(1, i) = 0.9 * x + 0.3 * g(rng);
  }
  const auto cv = cv_threshold(DataMatrix(a), {0.01, 2.0}, 4, 2);
  EXPECT_EQ(cv.u, 0.01);
}

TEST(Trend, SlopeRecovered) {
  const auto r = synthetic({100, 200, 400, 800}, 20, [](std::size_t n, double g, std::size_t rep) {
    return (1.0 + 0.01 * double(rep % 3)) * (5.0 / double(n)) * (1.0 + std::abs(g - 0.2));
  });
  TrendOptions opt;
  opt.target = -1.0;
  const auto v = trend_report({r}, Claim::slope, opt);
  EXPECT_NEAR(v.statistic, -1.0, 1e-9);
  EXPECT_TRUE(v.pass);
  opt.target = -0.5;
  EXPECT_FALSE(trend_report({r}, Claim::slope, opt).pass);
}

TEST(Trend, RiskDominanceAndOrdering) {
  auto high = synthetic({100}, 30, [](std::size_t, double g, std::size_t rep) { return 2.0 + g + 0.01 * double(rep % 5); });
  auto low = synthetic({100}, 30, [](std::size_t, double g, std::size_t rep) { return 1.0 + g + 0.01 * double(rep % 5); });
  EXPECT_TRUE(trend_report({high, low}, Claim::risk_dominance).pass);
  EXPECT_FALSE(trend_report({low, high}, Claim::risk_dominance).pass);
  EXPECT_TRUE(trend_report({low, low}, Claim::threshold_ordering).pass);
  auto late = synthetic({100}, 5, [](std::size_t, double g, std::size_t) { return std::abs(g - 0.4); });
  EXPECT_TRUE(trend_report({low, late}, Claim::threshold_ordering).pass);
  EXPECT_FALSE(trend_report({late, low}, Claim::threshold_ordering).pass);
  EXPECT_THROW(parse_claim("vibes"), InvalidArgument);
}

TEST(RateCurves, EndpointsAndFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "covts_curves_test";
  std::filesystem::remove_all(dir);
  const auto sigma = covmodels::tridiagonal_cov(10, 0.3);
  const auto prof = rates::RateProfile::make(100, 10, 4, 0.3);
  const auto c = emit_rate_curves(prof, sigma, dir, "curve");
  EXPECT_EQ(c.u.front(), 0.01);
  EXPECT_EQ(c.u.back(), 2.0);
  const std::string csv = slurp(dir / "curve.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "u,D,H,G,G_tilde,bound");
  EXPECT_NE(csv.find("\n0.01,"), std::string::npos);
  const std::string svg = slurp(dir / "curve.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  EXPECT_NE(svg.find("u_natural"), std::string::npos);
}

TEST(Fig2, PresetWritesEverything) {
  const auto dir = std::filesystem::temp_directory_path() / "covts_fig2_test";
  std::filesystem::remove_all(dir);
  const auto entries = run_fig2({}, dir);
  ASSERT_EQ(entries.size(), 6u);
  for (const auto& e : entries) {
    EXPECT_TRUE(std::filesystem::exists(dir / (e.stem + ".csv")));
    EXPECT_TRUE(std::filesystem::exists(dir / (e.stem + ".svg")));
  }
  const json markers = json::parse(slurp(dir / "fig2_markers.json"));
  EXPECT_EQ(markers.size(), 6u);
  EXPECT_TRUE(json::parse(slurp(dir / "meta.json")).contains("constants"));
}

TEST(Experiment, ZeroEstimatorRiskAgainstIdentity) {
  ExperimentConfig c;
  c.truth.kind = "identity";
  c.grid.explicit_values = {0.1, 1e6};
  c.n_list = {50};
  c.p_list = {8};
  c.replications = 2;
  const auto res = run_experiment(c, 1);
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& r : res.rows)
    if (r.grid_value == 1e6) {
      EXPECT_DOUBLE_EQ(r.frob_risk, 1.0 / 8.0);
      EXPECT_EQ(r.kept, 0u);
    }
}

TEST(CrossValidation, KillsNoiseEntries) {
  const std::size_t p = 20, n = 2000;
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(0.01 * std::pow(100.0, i / 40.0));
  int hits = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    Rng rng(derive_seed(99, rep));
    std::normal_distribution<double> g;
    Matrix a(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
    const DataMatrix z(a);
    const auto s = estim::sample_cov(z);
    std::vector<double> off;
    for (std::size_t j = 0; j < p; ++j)
      for (std::size_t k = 0; k < j; ++k) off.push_back(std::abs(s(j, k)));
    std::sort(off.begin(), off.end());
    const double q95 = off[std::size_t(0.95 * double(off.size() - 1))];
    hits += cv_threshold(z, grid, 5, rep).u > q95;
  }
  EXPECT_GE(hits, 40);
}

TEST(CrossValidation, SinglePointAndDeterminism) {
  Matrix a = Matrix::Random(3, 30);
  const DataMatrix z(a);
  EXPECT_EQ(cv_threshold(z, {0.3}, 3, 1).u, 0.3);
  const auto x = cv_threshold(z, {0.01, 0.1, 1.0}, 4, 8), y = cv_threshold(z, {0.01, 0.1, 1.0}, 4, 8);
  EXPECT_EQ(x.u, y.u);
  EXPECT_EQ(x.cuts, y.cuts);
  EXPECT_THROW(cv_threshold(DataMatrix(Matrix::Ones(2, 3)), {0.1}, 1, 1), InvalidArgument);
}
