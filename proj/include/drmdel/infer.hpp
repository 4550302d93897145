#ifndef DRMDEL_INFER_HPP
#define DRMDEL_INFER_HPP

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

#include "drmdel/del.hpp"
#include "drmdel/distributions.hpp"

namespace drmdel {

enum class TestMethod { DELR, Wald, Permutation, ANOVA, KruskalWallis };

inline const char* method_name(TestMethod m) {
    switch (m) {
        case TestMethod::DELR: return "DELR";
        case TestMethod::Wald: return "Wald";
        case TestMethod::Permutation: return "Permutation";
        case TestMethod::ANOVA: return "ANOVA";
        case TestMethod::KruskalWallis: return "KW";
    }
    return "?";
}

struct TestResult {
    double statistic = 0.0;
    int df = 0;
    double p_value = 1.0;
    TestMethod method = TestMethod::DELR;
    std::optional<FitResult> fit_unconstrained;
    std::optional<FitResult> fit_constrained;
};

// Empirical information matrix U_n = -n^{-1} d^2 l_n / d theta d theta' in
// (alpha, beta) block order, with the Schur complement
// Lambda = U_bb - U_ba U_aa^{-1} U_ab.
struct InfoMatrix {
    Matrix U;
    Matrix Lambda;
    int m = 0;
    int d = 0;

    Eigen::Block<const Matrix> U_aa() const { return U.block(0, 0, m, m); }
    Eigen::Block<const Matrix> U_ab() const { return U.block(0, m, m, m * d); }
    Eigen::Block<const Matrix> U_ba() const { return U.block(m, 0, m * d, m); }
    Eigen::Block<const Matrix> U_bb() const { return U.block(m, m, m * d, m * d); }
};

namespace detail {

inline InfoMatrix make_info(Matrix U, int m, int d) {
    InfoMatrix info;
    info.m = m;
    info.d = d;
    info.U = std::move(U);
    const auto Uaa = info.U.block(0, 0, m, m);
    Eigen::SelfAdjointEigenSolver<Matrix> es(Uaa);
    const double emin = es.eigenvalues().minCoeff();
    const double emax = es.eigenvalues().maxCoeff();
    if (!(emin > 0.0) || emax / emin > 1e12)
        throw numeric_error(
            "U_alpha_alpha is numerically singular; consider more data or a "
            "smaller basis");
    Eigen::LLT<Matrix> llt(Uaa);
    info.Lambda = info.U.block(m, m, m * d, m * d) -
                  info.U.block(m, 0, m * d, m) *
                      llt.solve(info.U.block(0, m, m, m * d));
    info.Lambda = 0.5 * (info.Lambda + info.Lambda.transpose());
    return info;
}

}  // namespace detail

inline InfoMatrix empirical_information(const Theta& theta, const MultiSample& data,
                                        const BasisFn& basis) {
    auto [grad, hess] = del_derivatives(theta, data, basis);
    (void)grad;
    Matrix U = -hess / static_cast<double>(data.total());
    return detail::make_info(std::move(U), data.m(), basis.dim());
}

namespace detail {

// Clamp tiny negative statistics to zero; anything below -1e-8 indicates an
// optimizer inconsistency and is an error.
inline double clamp_statistic(double stat) {
    if (stat < -1e-8)
        throw numeric_error("negative likelihood-ratio statistic " +
                            std::to_string(stat) +
                            ": constrained fit exceeded the unconstrained one");
    return std::max(stat, 0.0);
}

}  // namespace detail

// DELR test: R_n = 2{ l_n(theta_hat) - l_n(theta_tilde) }, null limit chi^2_q.
inline TestResult delr_test(const MultiSample& data, const BasisFn& basis,
                            const ConstraintSpec& c, const FitOptions& opts = {}) {
    TestResult res;
    res.method = TestMethod::DELR;
    res.df = c.q();
    try {
        res.fit_unconstrained = fit_mele(data, basis, opts);
    } catch (const fit_error& e) {
        throw numeric_error(std::string("unconstrained fit failed: ") + e.what());
    }
    try {
        res.fit_constrained = fit_constrained(data, basis, c, opts);
    } catch (const fit_error& e) {
        throw numeric_error(std::string("constrained fit failed: ") + e.what());
    }
    res.statistic = detail::clamp_statistic(
        2.0 * (res.fit_unconstrained->del_value - res.fit_constrained->del_value));
    res.p_value = 1.0 - chi2_cdf(res.df, res.statistic);
    return res;
}

// Wald test: n (A b_hat - b)' (A Lambda_hat^{-1} A')^{-1} (A b_hat - b) with
// Lambda_hat from the empirical information at theta_hat.
inline TestResult wald_test(const MultiSample& data, const BasisFn& basis,
                            const ConstraintSpec& c, const FitOptions& opts = {}) {
    TestResult res;
    res.method = TestMethod::Wald;
    res.df = c.q();
    try {
        res.fit_unconstrained = fit_mele(data, basis, opts);
    } catch (const fit_error& e) {
        throw numeric_error(std::string("fit failed: ") + e.what());
    }
    const InfoMatrix info =
        empirical_information(res.fit_unconstrained->theta_hat, data, basis);
    const Vector resid = c.A * res.fit_unconstrained->theta_hat.beta - c.b;
    Eigen::LLT<Matrix> lam(info.Lambda);
    if (lam.info() != Eigen::Success)
        throw numeric_error("Lambda_hat is not positive definite");
    const Matrix cov = c.A * lam.solve(c.A.transpose());
    Eigen::LLT<Matrix> covllt(cov);
    if (covllt.info() != Eigen::Success)
        throw numeric_error("A Lambda^{-1} A' is singular");
    res.statistic = detail::clamp_statistic(
        static_cast<double>(data.total()) * resid.dot(covllt.solve(resid)));
    res.p_value = 1.0 - chi2_cdf(res.df, res.statistic);
    return res;
}

namespace detail {

// Stream derivation so permutation replicates are order independent.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (a + 1) + 0xbf58476d1ce4e5b9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Permutation version of the DELR test for the full-equality hypothesis
// F_0 = ... = F_m (beta = 0). Pooled observations are reshuffled into the
// original sample sizes; p = (1 + #{R* >= R}) / (reps + 1).
inline TestResult permutation_test(const MultiSample& data, const BasisFn& basis,
                                   const ConstraintSpec& c, int reps,
                                   std::uint64_t seed,
                                   const FitOptions& opts = {}) {
    if (c.q() != c.md() || c.b.lpNorm<Eigen::Infinity>() > 1e-12)
        throw data_error(
            "permutation test supports only the full-equality hypothesis "
            "(q = m*d, b = 0)");
    if (reps < 99) throw data_error("permutation test needs reps >= 99");

    TestResult res = delr_test(data, basis, c, opts);
    res.method = TestMethod::Permutation;
    const double observed = res.statistic;

    const std::vector<double> pooled = data.pooled();
    const int npop = data.num_populations();
    std::vector<std::size_t> sizes(npop);
    for (int k = 0; k < npop; ++k) sizes[k] = data.size(k);

    int exceed = 0;
    for (int rep = 0; rep < reps; ++rep) {
        std::mt19937_64 rng(detail::mix_seed(seed, rep, 0));
        std::vector<double> shuffled = pooled;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        std::vector<std::vector<double>> parts(npop);
        std::size_t pos = 0;
        for (int k = 0; k < npop; ++k) {
            parts[k].assign(shuffled.begin() + pos, shuffled.begin() + pos + sizes[k]);
            pos += sizes[k];
        }
        try {
            TestResult perm = delr_test(MultiSample(std::move(parts)), basis, c, opts);
            if (perm.statistic >= observed) ++exceed;
        } catch (const numeric_error&) {
            ++exceed;  // count failed permutations conservatively
        }
    }
    res.p_value = (1.0 + exceed) / (reps + 1.0);
    return res;
}

// Holds everything needed for the chi-square pair (cdf, quantile) named in
// the module contract; thin wrappers over distributions.hpp.
struct Chi2 {
    static double cdf(int q, double x) { return chi2_cdf(q, x); }
    static double quantile(int q, double p) { return chi2_quantile(q, p); }
};

}  // namespace drmdel

#endif  // DRMDEL_INFER_HPP
