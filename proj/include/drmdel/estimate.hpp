#ifndef DRMDEL_ESTIMATE_HPP
#define DRMDEL_ESTIMATE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "drmdel/del.hpp"

namespace drmdel {

// Fitted baseline F_0 as point masses p_kj at the pooled observations, with
// precomputed sorted order and per-population cumulative tilted weights so
// CDF queries cost O(log n) after O(n log n) setup.
class WeightedBaseline {
  public:
    WeightedBaseline(std::vector<double> points, std::vector<double> weights,
                     Theta theta_hat, const BasisFn& basis)
        : points_(std::move(points)),
          weights_(std::move(weights)),
          theta_(std::move(theta_hat)) {
        const std::size_t n = points_.size();
        const int m = theta_.m(), d = theta_.d();
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::stable_sort(order_.begin(), order_.end(),
                         [&](std::size_t a, std::size_t b) { return points_[a] < points_[b]; });
        sorted_x_.resize(n);
        cum_.assign(m + 1, std::vector<double>(n));
        masses_.assign(m + 1, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t idx = order_[i];
            sorted_x_[i] = points_[idx];
            const Vector q = basis(points_[idx]);
            for (int k = 0; k <= m; ++k) {
                const double tilt =
                    k == 0 ? 1.0
                           : std::exp(theta_.alpha[k - 1] +
                                      theta_.beta_block(k - 1, d).dot(q));
                const double mass = tilt * weights_[idx];
                masses_[k][i] = mass;
                cum_[k][i] = mass + (i > 0 ? cum_[k][i - 1] : 0.0);
            }
        }
    }

    std::size_t size() const { return points_.size(); }
    int num_populations() const { return theta_.m() + 1; }
    const std::vector<double>& points() const { return points_; }
    const std::vector<double>& weights() const { return weights_; }
    const Theta& theta_hat() const { return theta_; }

    // F_hat_k(x) = sum_j exp(a_k + b_k'q(x_j)) p_j 1(x_j <= x)
    double cdf(int k, double x) const {
        check_k(k);
        const auto it = std::upper_bound(sorted_x_.begin(), sorted_x_.end(), x);
        if (it == sorted_x_.begin()) return 0.0;
        const std::size_t i = static_cast<std::size_t>(it - sorted_x_.begin()) - 1;
        return std::min(1.0, cum_[k][i]);
    }

    // Per-point masses of population k over the sorted pooled points.
    const std::vector<double>& masses(int k) const {
        check_k(k);
        return masses_[k];
    }
    const std::vector<double>& sorted_points() const { return sorted_x_; }

  private:
    void check_k(int k) const {
        if (k < 0 || k > theta_.m())
            throw data_error("population index out of range");
    }

    std::vector<double> points_;
    std::vector<double> weights_;
    Theta theta_;
    std::vector<std::size_t> order_;
    std::vector<double> sorted_x_;
    std::vector<std::vector<double>> cum_;     // per population, cumulative tilted
    std::vector<std::vector<double>> masses_;  // per population, sorted order
};

// EL weights p_kj = n^{-1} { sum_r lam_r exp(a_r + b_r'q(x_kj)) }^{-1}
// at a converged fit (the Lagrange multipliers equal n_r/n there).
inline WeightedBaseline baseline_weights(const FitResult& fit,
                                         const MultiSample& data,
                                         const BasisFn& basis) {
    if (!fit.converged)
        throw numeric_error("baseline weights require a converged fit");
    const int m = data.m(), d = basis.dim();
    const double n = static_cast<double>(data.total());
    std::vector<double> points = data.pooled();
    std::vector<double> weights(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const Vector q = basis(points[i]);
        double s = data.proportion(0);
        for (int r = 1; r <= m; ++r)
            s += data.proportion(r) *
                 std::exp(fit.theta_hat.alpha[r - 1] +
                          fit.theta_hat.beta_block(r - 1, d).dot(q));
        weights[i] = 1.0 / (n * s);
    }
    return WeightedBaseline(std::move(points), std::move(weights), fit.theta_hat,
                            basis);
}

inline double fitted_cdf(const WeightedBaseline& wb, int k, double x) {
    return wb.cdf(k, x);
}

// Weighted standard deviation and Silverman's rule on the tilted masses of
// population k, with a Gaussian kernel as the default.
inline double silverman_bandwidth(const WeightedBaseline& wb, int k) {
    const auto& w = wb.masses(k);
    const auto& x = wb.sorted_points();
    double mean = 0.0, wsum = 0.0, w2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mean += w[i] * x[i];
        wsum += w[i];
        w2 += w[i] * w[i];
    }
    mean /= wsum;
    double var = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        var += w[i] * (x[i] - mean) * (x[i] - mean);
    var /= wsum;
    const double n_eff = wsum * wsum / w2;
    return 1.06 * std::sqrt(var) * std::pow(n_eff, -0.2);
}

// Gaussian-kernel density with per-point mass exp(a_k + b_k'q(x_j)) p_j.
inline std::vector<double> el_kernel_density(const WeightedBaseline& wb, int k,
                                             double bandwidth,
                                             const std::vector<double>& grid) {
    if (!(bandwidth > 0.0)) throw data_error("bandwidth must be positive");
    const auto& w = wb.masses(k);
    const auto& x = wb.sorted_points();
    const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * M_PI));
    std::vector<double> out(grid.size(), 0.0);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double z = (grid[g] - x[i]) / bandwidth;
            acc += w[i] * std::exp(-0.5 * z * z);
        }
        out[g] = acc * norm;
    }
    return out;
}

}  // namespace drmdel

#endif  // DRMDEL_ESTIMATE_HPP
