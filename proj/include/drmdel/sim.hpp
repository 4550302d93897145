#ifndef DRMDEL_SIM_HPP
#define DRMDEL_SIM_HPP

#include <atomic>
#include <cstdint>
#include <thread>
#include <vector>

#include "drmdel/estimate.hpp"
#include "drmdel/power.hpp"

namespace drmdel {

// ---------------------------------------------------------------------------
// Random generation
// ---------------------------------------------------------------------------

// Deterministic sampler over a 64-bit Mersenne engine. Normal draws use
// Box-Muller, gamma uses Marsaglia-Tsang, Weibull and Pareto use the inverse
// CDF, so streams are reproducible independent of the standard library.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    double uniform() {
        // 53-bit mantissa uniform in (0, 1)
        return ((eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    }

    double normal() {
        const double u1 = uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double gamma(double shape, double rate) {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, 1.0);
            return g * std::pow(uniform(), 1.0 / shape) / rate;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v))
                return d * v / rate;
        }
    }

    double draw(const BaselineSpec& f) {
        switch (f.family) {
            case Family::Normal: return f.p1 + f.p2 * normal();
            case Family::Gamma: return gamma(f.p1, f.p2);
            case Family::LogNormal: return std::exp(f.p1 + f.p2 * normal());
            case Family::Pareto: return std::pow(uniform(), -1.0 / f.p1);
            case Family::Weibull:
                return f.p2 * std::pow(-std::log(uniform()), 1.0 / f.p1);
        }
        throw data_error("unknown family");
    }

  private:
    std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Study configuration
// ---------------------------------------------------------------------------

struct PopulationSpec {
    BaselineSpec dist;
    std::size_t size;
};

// One parameter setting: the generating truth of every population.
using FamilySpec = std::vector<PopulationSpec>;

// Per-replicate RNG streams are derived as hash(seed, replicate, population)
// so results do not depend on execution order.
inline MultiSample sample_family(const FamilySpec& spec, std::uint64_t seed,
                                 std::uint64_t replicate = 0) {
    std::vector<std::vector<double>> samples(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) {
        Rng rng(detail::mix_seed(seed, replicate, k));
        samples[k].resize(spec[k].size);
        for (auto& x : samples[k]) x = rng.draw(spec[k].dist);
    }
    return MultiSample(std::move(samples));
}

struct StudyConfig {
    std::string scenario;
    std::vector<FamilySpec> settings;  // index 0 is the null setting
    BasisSpec basis;
    ConstraintSpec constraint;
    double level = 0.05;
    int replicates = 2000;
    std::uint64_t seed = 20130810;
    std::vector<TestMethod> methods = {TestMethod::DELR};
    int threads = 0;  // 0 = hardware concurrency
    int permutation_reps = 199;
};

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// Index-parallel loop with deterministic aggregation: results are stored per
// index, then folded in index order by the caller.
template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    threads = std::min(resolve_threads(threads), std::max(count, 1));
    if (threads <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Competitor tests
// ---------------------------------------------------------------------------

// One-way ANOVA F with F(m, n - m - 1) reference.
inline TestResult anova_test(const MultiSample& data) {
    const int groups = data.num_populations();
    const double n = static_cast<double>(data.total());
    const int dfw = static_cast<int>(n) - groups;
    if (dfw <= 0) throw data_error("ANOVA needs more observations than groups");

    double grand = 0.0;
    for (int k = 0; k < groups; ++k)
        for (double x : data.sample(k)) grand += x;
    grand /= n;

    double ssb = 0.0, ssw = 0.0;
    for (int k = 0; k < groups; ++k) {
        const auto& s = data.sample(k);
        double mean = 0.0;
        for (double x : s) mean += x;
        mean /= static_cast<double>(s.size());
        ssb += static_cast<double>(s.size()) * (mean - grand) * (mean - grand);
        for (double x : s) ssw += (x - mean) * (x - mean);
    }
    TestResult res;
    res.method = TestMethod::ANOVA;
    res.df = groups - 1;
    if (ssw == 0.0 && ssb == 0.0) {  // all observations identical
        res.statistic = 0.0;
        res.p_value = 1.0;
        return res;
    }
    const double msb = ssb / (groups - 1);
    const double msw = ssw / dfw;
    res.statistic = msw == 0.0 ? std::numeric_limits<double>::infinity() : msb / msw;
    res.p_value = 1.0 - fisher_f_cdf(groups - 1, dfw, res.statistic);
    return res;
}

// Kruskal-Wallis with mid-rank ties and chi^2_m reference.
inline TestResult kruskal_wallis_test(const MultiSample& data) {
    const int groups = data.num_populations();
    const double n = static_cast<double>(data.total());
    std::vector<std::pair<double, int>> tagged;  // (value, group)
    tagged.reserve(data.total());
    for (int k = 0; k < groups; ++k)
        for (double x : data.sample(k)) tagged.emplace_back(x, k);
    std::sort(tagged.begin(), tagged.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<double> rank_sum(groups, 0.0);
    double tie_correction = 0.0;
    std::size_t i = 0;
    while (i < tagged.size()) {
        std::size_t j = i;
        while (j < tagged.size() && tagged[j].first == tagged[i].first) ++j;
        const double t = static_cast<double>(j - i);
        const double midrank = 0.5 * static_cast<double>(i + j + 1);  // 1-based
        for (std::size_t r = i; r < j; ++r) rank_sum[tagged[r].second] += midrank;
        tie_correction += t * t * t - t;
        i = j;
    }
    double h = 0.0;
    for (int k = 0; k < groups; ++k)
        h += rank_sum[k] * rank_sum[k] / static_cast<double>(data.size(k));
    h = 12.0 / (n * (n + 1.0)) * h - 3.0 * (n + 1.0);
    const double denom = 1.0 - tie_correction / (n * n * n - n);

    TestResult res;
    res.method = TestMethod::KruskalWallis;
    res.df = groups - 1;
    if (denom <= 0.0) {  // all observations tied
        res.statistic = 0.0;
        res.p_value = 1.0;
        return res;
    }
    res.statistic = std::max(0.0, h / denom);
    res.p_value = 1.0 - chi2_cdf(res.df, res.statistic);
    return res;
}

// ---------------------------------------------------------------------------
// Study runners
// ---------------------------------------------------------------------------

struct NullStudyResult {
    double rejection_rate = 0.0;
    std::vector<double> statistic_draws;           // successful replicates
    std::vector<std::pair<double, double>> qq;     // (chi2 quantile, sorted R_n)
    int failures = 0;
    bool failure_warning = false;
};

namespace detail {

template <class RunOne>
void run_replicates(int replicates, int threads, std::vector<double>& draws,
                    int& failures, RunOne&& run_one) {
    std::vector<double> raw(replicates,
                            std::numeric_limits<double>::quiet_NaN());
    parallel_for(replicates, threads, [&](int rep) {
        try {
            raw[rep] = run_one(rep);
        } catch (const std::exception&) {
            // leave NaN; tallied below
        }
    });
    draws.clear();
    failures = 0;
    for (double v : raw) {
        if (std::isnan(v))
            ++failures;
        else
            draws.push_back(v);
    }
}

}  // namespace detail

// Null calibration: simulate setting 0, compute the DELR statistic each
// replicate, report the rejection rate and QQ pairs against chi^2_q.
inline NullStudyResult run_null_study(const StudyConfig& cfg) {
    if (cfg.settings.empty()) throw data_error("study needs a null setting");
    NullStudyResult res;
    const BasisFn basis = build_basis(cfg.basis);
    detail::run_replicates(
        cfg.replicates, cfg.threads, res.statistic_draws, res.failures,
        [&](int rep) {
            const MultiSample data = sample_family(cfg.settings[0], cfg.seed, rep);
            return delr_test(data, basis, cfg.constraint).statistic;
        });
    if (res.failures > cfg.replicates / 100)
        throw numeric_error("more than 1% of study replicates failed to fit");
    res.failure_warning = res.failures * 1000 > cfg.replicates;

    const double crit = chi2_quantile(cfg.constraint.q(), 1.0 - cfg.level);
    int reject = 0;
    for (double r : res.statistic_draws)
        if (r >= crit) ++reject;
    const double ok = static_cast<double>(res.statistic_draws.size());
    res.rejection_rate = ok == 0.0 ? 0.0 : reject / ok;

    std::vector<double> sorted = res.statistic_draws;
    std::sort(sorted.begin(), sorted.end());
    res.qq.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double p = (static_cast<double>(i) + 0.5) / ok;
        res.qq.emplace_back(chi2_quantile(cfg.constraint.q(), p), sorted[i]);
    }
    return res;
}

// Local-alternative study: generate from the DRM tilts beta_k* + n_k^{-1/2}c_k
// of a normal or gamma baseline and return the draws plus the theoretical
// noncentrality for QQ comparison against chi^2_q(delta^2).
struct LocalStudyConfig {
    BaselineSpec f0;                // Normal (basis x, x^2) or Gamma (log x, x)
    std::vector<std::size_t> sizes;  // m+1 sizes
    std::vector<Vector> beta_star;   // m blocks
    std::vector<Vector> drifts;      // m blocks
    BasisSpec basis;
    ConstraintSpec constraint;
    int replicates = 2000;
    std::uint64_t seed = 20130810;
    int threads = 0;
};

struct LocalStudyResult {
    std::vector<double> statistic_draws;
    double delta2 = 0.0;
    int failures = 0;
};

inline BaselineSpec tilt_family(const BaselineSpec& f0, const Vector& beta) {
    if (f0.family == Family::Normal) {
        const NormalParams p = normal_from_drm(f0.p1, f0.p2, beta[0], beta[1]);
        return BaselineSpec(Family::Normal, p.mu, p.sigma);
    }
    if (f0.family == Family::Gamma) {
        const GammaParams p = gamma_from_drm(f0.p1, f0.p2, beta[0], beta[1]);
        return BaselineSpec(Family::Gamma, p.shape, p.rate);
    }
    throw data_error("local-alternative generation supports normal and gamma baselines");
}

inline LocalStudyResult run_local_alternative_study(const LocalStudyConfig& cfg) {
    const int m = static_cast<int>(cfg.beta_star.size());
    std::size_t n = 0;
    for (auto s : cfg.sizes) n += s;

    FamilySpec generating;
    generating.push_back({cfg.f0, cfg.sizes[0]});
    for (int k = 0; k < m; ++k) {
        const Vector beta =
            cfg.beta_star[k] +
            cfg.drifts[k] / std::sqrt(static_cast<double>(cfg.sizes[k + 1]));
        generating.push_back({tilt_family(cfg.f0, beta), cfg.sizes[k + 1]});
    }

    LocalStudyResult res;
    std::vector<double> rho(m + 1);
    for (int k = 0; k <= m; ++k)
        rho[k] = static_cast<double>(cfg.sizes[k]) / static_cast<double>(n);
    const BasisFn basis = build_basis(cfg.basis);
    const InfoMatrix U =
        theoretical_information(cfg.f0, cfg.beta_star, rho, basis);
    LocalAlternative alt;
    alt.beta_star = cfg.beta_star;
    alt.drifts = cfg.drifts;
    alt.rho = rho;
    res.delta2 = noncentrality(alt, U, cfg.constraint);

    detail::run_replicates(
        cfg.replicates, cfg.threads, res.statistic_draws, res.failures,
        [&](int rep) {
            const MultiSample data = sample_family(generating, cfg.seed, rep);
            return delr_test(data, basis, cfg.constraint).statistic;
        });
    if (res.failures > cfg.replicates / 100)
        throw numeric_error("more than 1% of study replicates failed to fit");
    return res;
}

// Power table: per-setting, per-method rejection rates with Monte Carlo
// standard errors sqrt(p(1-p)/reps).
struct PowerCell {
    int setting = 0;
    TestMethod method = TestMethod::DELR;
    double rate = 0.0;
    double std_error = 0.0;
    int failures = 0;
};

struct PowerStudyResult {
    std::vector<PowerCell> cells;  // setting-major, method order as configured
};

inline PowerStudyResult run_power_study(const StudyConfig& cfg) {
    if (cfg.settings.empty()) throw data_error("study needs at least one setting");
    PowerStudyResult out;
    const BasisFn basis = build_basis(cfg.basis);
    const int nm = static_cast<int>(cfg.methods.size());

    for (std::size_t setting = 0; setting < cfg.settings.size(); ++setting) {
        // one pass per setting; every method evaluated on the same replicate
        std::vector<std::vector<int>> rejected(
            nm, std::vector<int>(cfg.replicates, -1));  // -1 = failed
        detail::parallel_for(cfg.replicates, cfg.threads, [&](int rep) {
            const MultiSample data =
                sample_family(cfg.settings[setting], cfg.seed, rep);
            for (int mi = 0; mi < nm; ++mi) {
                try {
                    TestResult r;
                    switch (cfg.methods[mi]) {
                        case TestMethod::DELR:
                            r = delr_test(data, basis, cfg.constraint);
                            break;
                        case TestMethod::Wald:
                            r = wald_test(data, basis, cfg.constraint);
                            break;
                        case TestMethod::Permutation:
                            r = permutation_test(data, basis, cfg.constraint,
                                                 cfg.permutation_reps,
                                                 detail::mix_seed(cfg.seed, rep, 97));
                            break;
                        case TestMethod::ANOVA:
                            r = anova_test(data);
                            break;
                        case TestMethod::KruskalWallis:
                            r = kruskal_wallis_test(data);
                            break;
                    }
                    rejected[mi][rep] = r.p_value < cfg.level ? 1 : 0;
                } catch (const std::exception&) {
                    rejected[mi][rep] = -1;
                }
            }
        });
        for (int mi = 0; mi < nm; ++mi) {
            PowerCell cell;
            cell.setting = static_cast<int>(setting);
            cell.method = cfg.methods[mi];
            int ok = 0, rej = 0;
            for (int flag : rejected[mi]) {
                if (flag < 0)
                    ++cell.failures;
                else {
                    ++ok;
                    rej += flag;
                }
            }
            if (cell.failures > cfg.replicates / 100)
                throw numeric_error("more than 1% of study replicates failed to fit");
            cell.rate = ok == 0 ? 0.0 : static_cast<double>(rej) / ok;
            cell.std_error =
                ok == 0 ? 0.0 : std::sqrt(cell.rate * (1.0 - cell.rate) / ok);
            out.cells.push_back(cell);
        }
    }
    return out;
}

}  // namespace drmdel

#endif  // DRMDEL_SIM_HPP
