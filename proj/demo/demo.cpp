// Walk-through of the library on one simulated dataset: covariance by
// thresholding, a positive-definite version, a graphical-lasso precision
// estimate, and the rate-equation thresholds for the same (n, p).

#include "covts/covts.hpp"

#include <iomanip>
#include <iostream>

using namespace covts;

int main() {
  const std::size_t p = 30, n = 400;

  // Spatial truth: exponential kernel over random planar sites.
  const auto sites = covmodels::uniform_sites(p, std::sqrt(double(p)), 3);
  const SymMatrix sigma = covmodels::gamma_exponential_cov(sites, 0.5, 1.0);

  // Temporally dependent data with that marginal covariance.
  procsim::ProcessSpec spec;
  spec.p = p;
  spec.seed = 11;
  spec.burn_in = 0;
  spec.params = procsim::LinearDecayParams{1.0, std::size_t{200}, procsim::Mixing::identity, true};
  const Matrix root = linalg::sym_sqrt(sigma.dense());
  const DataMatrix z(root * procsim::simulate(spec, n).values());

  const SymMatrix s = estim::sample_cov(z);
  std::cout << std::setprecision(4);
  std::cout << "sample covariance   frob risk " << estim::frob_err(s, sigma) << "\n";

  const auto cv = harness::cv_threshold(z, {0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5}, 10, 5);
  const auto t = estim::threshold(s, cv.u);
  std::cout << "cv threshold u=" << cv.u << "  frob risk " << estim::frob_err(t.matrix, sigma) << ", kept " << t.kept
            << " of " << p * p << "\n";

  const SymMatrix pd = estim::positive_definitize(t.matrix, estim::default_pd_floor(t));
  std::cout << "pd version          min eigenvalue " << linalg::min_eigenvalue(pd) << ", frob risk "
            << estim::frob_err(pd, sigma) << "\n";

  const auto prec = glasso::glasso_fit(s, glasso::lambda_from_threshold(cv.u / 4.0));
  const SymMatrix omega = linalg::sym_inverse(sigma);
  std::cout << "glasso              " << prec.iterations << " iterations, kkt " << prec.kkt_residual
            << ", frob risk vs precision " << estim::frob_err(prec.omega, omega) << "\n";

  const auto prof = rates::RateProfile::make(double(n), double(p), 4.0, 0.3);
  const auto mk = rates::threshold_markers(prof, sigma);
  auto show = [](const std::optional<double>& u) { return u ? std::to_string(*u) : std::string("no crossing"); };
  std::cout << "rate thresholds     u_diamond " << show(mk.u_diamond) << ", u_dagger " << show(mk.u_dagger)
            << ", u_natural " << mk.u_natural << "\n";
  return 0;
}
