#include "lsp2/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

namespace lsp2 {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFwhmPerSigma = 2.354820045030949;

std::array<double, 4> to_array(const GaussianParams& p)
{
    return {p.amplitude, p.center, p.sigma, p.background};
}

GaussianParams from_array(const std::array<double, 4>& a)
{
    return {a[0], a[1], a[2], a[3]};
}

GaussianFit failed(GaussianFit fit, std::string why)
{
    fit.converged = false;
    fit.failure = std::move(why);
    fit.params = {kNaN, kNaN, kNaN, kNaN};
    fit.errors = {kNaN, kNaN, kNaN, kNaN};
    return fit;
}

}  // namespace

double gaussian_model(const GaussianParams& p, double t)
{
    const double z = (t - p.center) / p.sigma;
    return p.background + p.amplitude * std::exp(-0.5 * z * z);
}

std::array<double, 4> gaussian_model_gradient(const GaussianParams& p, double t)
{
    const double d = t - p.center;
    const double z = d / p.sigma;
    const double g = std::exp(-0.5 * z * z);
    const double ag = p.amplitude * g;
    return {g, ag * d / (p.sigma * p.sigma), ag * d * d / (p.sigma * p.sigma * p.sigma), 1.0};
}

double fit_objective(const GaussianParams& p, std::span<const double> t, std::span<const double> y,
                     std::span<const double> w)
{
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - gaussian_model(p, t[i]);
        s += w[i] * r * r;
    }
    return s;
}

std::array<double, 4> fit_objective_gradient(const GaussianParams& p, std::span<const double> t,
                                             std::span<const double> y, std::span<const double> w)
{
    std::array<double, 4> g{};
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - gaussian_model(p, t[i]);
        const auto j = gaussian_model_gradient(p, t[i]);
        for (std::size_t k = 0; k < 4; ++k) g[k] += -2.0 * w[i] * r * j[k];
    }
    return g;
}

std::vector<double> neyman_weights(std::span<const double> y)
{
    std::vector<double> w(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) w[i] = 1.0 / std::max(y[i], 1.0);
    return w;
}

GaussianParams initial_guess(std::span<const double> t, std::span<const double> y, double bin_width_ps)
{
    const std::size_t n = y.size();
    std::vector<double> sorted(y.begin(), y.end());
    std::nth_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(n / 2), sorted.end());
    double median = sorted[n / 2];
    if (n % 2 == 0 && n > 1) {
        const double lower = *std::max_element(sorted.begin(), sorted.begin() + std::ptrdiff_t(n / 2));
        median = 0.5 * (median + lower);
    }

    std::vector<double> smooth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= 2 ? i - 2 : 0;
        const std::size_t hi = std::min(n - 1, i + 2);
        double s = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) s += y[k];
        smooth[i] = s / double(hi - lo + 1);
    }
    const auto peak = std::size_t(std::max_element(smooth.begin(), smooth.end()) - smooth.begin());
    const double amplitude = std::max(smooth[peak] - median, 0.0);

    const double half = median + 0.5 * amplitude;
    std::size_t left = peak, right = peak;
    while (left > 0 && smooth[left - 1] > half) --left;
    while (right + 1 < n && smooth[right + 1] > half) ++right;
    const double fwhm = std::max(double(right - left + 1) * bin_width_ps, bin_width_ps);

    return {amplitude, t[peak], std::max(fwhm / kFwhmPerSigma, bin_width_ps), median};
}

GaussianFit fit_gaussian(std::span<const double> t_all, std::span<const double> y_all, double bin_width_ps,
                         const FitOptions& options)
{
    GaussianFit fit;
    fit.bin_width_ps = bin_width_ps;

    std::vector<double> t, y;
    for (std::size_t i = 0; i < t_all.size(); ++i) {
        if (options.range_lo_ps && t_all[i] < *options.range_lo_ps) continue;
        if (options.range_hi_ps && t_all[i] > *options.range_hi_ps) continue;
        t.push_back(t_all[i]);
        y.push_back(y_all[i]);
    }
    fit.range_lo_ps = t.empty() ? 0.0 : t.front();
    fit.range_hi_ps = t.empty() ? 0.0 : t.back();

    std::array<bool, 4> active{true, !options.fixed_center_ps, !options.fixed_sigma_ps, true};
    const int n_active = int(std::count(active.begin(), active.end(), true));
    if (int(t.size()) <= n_active) return failed(fit, "too few bins");
    if (std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0; })) return failed(fit, "empty histogram");

    const auto w = neyman_weights(y);
    GaussianParams start = initial_guess(t, y, bin_width_ps);
    if (options.fixed_center_ps) start.center = *options.fixed_center_ps;
    if (options.fixed_sigma_ps) start.sigma = *options.fixed_sigma_ps;

    std::vector<int> idx;
    for (int k = 0; k < 4; ++k)
        if (active[std::size_t(k)]) idx.push_back(k);
    const auto m = Eigen::Index(idx.size());

    auto normal_equations = [&](const GaussianParams& p, Eigen::MatrixXd& H, Eigen::VectorXd& g) {
        H.setZero(m, m);
        g.setZero(m);
        for (std::size_t i = 0; i < t.size(); ++i) {
            const double r = y[i] - gaussian_model(p, t[i]);
            const auto j = gaussian_model_gradient(p, t[i]);
            for (Eigen::Index a = 0; a < m; ++a) {
                const double ja = j[std::size_t(idx[std::size_t(a)])];
                g(a) += w[i] * ja * r;
                for (Eigen::Index b = 0; b <= a; ++b) H(a, b) += w[i] * ja * j[std::size_t(idx[std::size_t(b)])];
            }
        }
        for (Eigen::Index a = 0; a < m; ++a)
            for (Eigen::Index b = a + 1; b < m; ++b) H(a, b) = H(b, a);
    };

    GaussianParams p = start;
    double loss = fit_objective(p, t, y, w);
    double lambda = 1e-3;
    bool converged = false;
    int iter = 0;
    Eigen::MatrixXd H;
    Eigen::VectorXd g;
    for (; iter < options.max_iterations; ++iter) {
        normal_equations(p, H, g);
        if (loss == 0.0) {
            converged = true;
            break;
        }
        bool accepted = false;
        while (!accepted) {
            Eigen::MatrixXd A = H;
            for (Eigen::Index a = 0; a < m; ++a) A(a, a) += lambda * std::max(H(a, a), 1e-300);
            const Eigen::VectorXd delta = A.ldlt().solve(g);
            auto arr = to_array(p);
            for (Eigen::Index a = 0; a < m; ++a) arr[std::size_t(idx[std::size_t(a)])] += delta(a);
            GaussianParams trial = from_array(arr);
            trial.background = std::max(trial.background, 0.0);
            const double trial_loss =
                trial.sigma > 0.0 && delta.allFinite() ? fit_objective(trial, t, y, w) : std::numeric_limits<double>::infinity();
            if (trial_loss < loss) {
                const double rel = (loss - trial_loss) / loss;
                p = trial;
                loss = trial_loss;
                lambda = std::max(lambda * 0.1, 1e-12);
                accepted = true;
                if (rel < options.rel_tolerance) converged = true;
            } else {
                lambda *= 10.0;
                if (lambda > 1e16) {
                    // No downhill step left: we are at the minimum.
                    converged = true;
                    break;
                }
            }
        }
        if (converged) break;
    }
    fit.iterations = iter + 1;
    fit.chi2 = loss;
    fit.dof = int(t.size()) - n_active;
    fit.chi2_per_dof = fit.dof > 0 ? loss / fit.dof : 0.0;

    if (!converged) return failed(fit, "no convergence within iteration limit");
    if (!std::isfinite(p.amplitude) || !std::isfinite(p.center) || !std::isfinite(p.sigma))
        return failed(fit, "non-finite parameters");
    if (p.sigma < 0.5 * bin_width_ps) return failed(fit, "sigma collapsed below half a bin");
    if (p.center < fit.range_lo_ps || p.center > fit.range_hi_ps) return failed(fit, "center outside fit range");

    normal_equations(p, H, g);
    const Eigen::MatrixXd cov = H.inverse();
    std::array<double, 4> err{0.0, 0.0, 0.0, 0.0};
    for (Eigen::Index a = 0; a < m; ++a) {
        const double v = cov(a, a);
        err[std::size_t(idx[std::size_t(a)])] = v >= 0.0 && std::isfinite(v) ? std::sqrt(v) : std::numeric_limits<double>::infinity();
    }
    fit.converged = true;
    fit.params = p;
    fit.errors = from_array(err);
    return fit;
}

GaussianFit fit_gaussian(const DeltaTHistogram& hist, const FitOptions& options)
{
    std::vector<double> t(hist.size()), y(hist.size());
    for (std::size_t i = 0; i < hist.size(); ++i) {
        t[i] = hist.center(i);
        y[i] = double(hist.counts[i]);
    }
    return fit_gaussian(t, y, hist.bin_width_ps, options);
}

}  // namespace lsp2
