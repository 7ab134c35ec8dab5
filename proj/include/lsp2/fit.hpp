#pragma once

// Gaussian-plus-flat-background peak fitting,
//   y(t) = b + A exp(-(t - mu)^2 / (2 sigma^2)),
// by Levenberg-Marquardt on the Neyman chi-square (weights 1 / max(y, 1)).

#include "lsp2/histogram.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>

namespace lsp2 {

struct GaussianParams {
    double amplitude = 0.0;   // counts per bin above background
    double center = 0.0;      // ps
    double sigma = 0.0;       // ps
    double background = 0.0;  // counts per bin
};

struct GaussianFit {
    bool converged = false;
    std::string failure;  // empty when converged
    GaussianParams params;
    GaussianParams errors;
    double chi2 = 0.0;
    int dof = 0;
    double chi2_per_dof = 0.0;
    int iterations = 0;
    double bin_width_ps = 0.0;
    double range_lo_ps = 0.0;
    double range_hi_ps = 0.0;

    explicit operator bool() const { return converged; }
};

struct FitOptions {
    std::optional<double> range_lo_ps;  // restrict to bin centers in [lo, hi]
    std::optional<double> range_hi_ps;
    std::optional<double> fixed_center_ps;  // hold mu fixed
    std::optional<double> fixed_sigma_ps;   // hold sigma fixed
    int max_iterations = 200;
    double rel_tolerance = 1e-8;

    static FitOptions around(double center_ps, double half_range_ps)
    {
        FitOptions o;
        o.range_lo_ps = center_ps - half_range_ps;
        o.range_hi_ps = center_ps + half_range_ps;
        return o;
    }
};

double gaussian_model(const GaussianParams& p, double t);

/// d y / d (A, mu, sigma, b).
std::array<double, 4> gaussian_model_gradient(const GaussianParams& p, double t);

/// Weighted squared residual sum and its analytic gradient in (A, mu, sigma, b).
double fit_objective(const GaussianParams& p, std::span<const double> t, std::span<const double> y,
                     std::span<const double> w);
std::array<double, 4> fit_objective_gradient(const GaussianParams& p, std::span<const double> t,
                                             std::span<const double> y, std::span<const double> w);

/// Neyman weights 1 / max(y, 1).
std::vector<double> neyman_weights(std::span<const double> y);

/// Starting point: b = median, mu = argmax of the 5-bin moving average,
/// A = max - b, sigma = FWHM / 2.355.
GaussianParams initial_guess(std::span<const double> t, std::span<const double> y, double bin_width_ps);

/// Fit sampled data (t = bin centers, y = counts). Failures (no convergence,
/// sigma below half a bin, center outside the range, empty input) come back
/// with converged == false and NaN parameters.
GaussianFit fit_gaussian(std::span<const double> t, std::span<const double> y, double bin_width_ps,
                         const FitOptions& options = {});

GaussianFit fit_gaussian(const DeltaTHistogram& hist, const FitOptions& options = {});

}  // namespace lsp2
