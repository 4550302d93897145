#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "drmdel/sim.hpp"

using namespace drmdel;

TEST_CASE("generator moment checks at large n") {
    Rng rng(12345);
    const int n = 200000;

    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));

    // gamma(shape 2.5, rate 2): mean 1.25, var 0.625
    sum = sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gamma(2.5, 2.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    CHECK(mean == doctest::Approx(1.25).epsilon(0.02));
    CHECK(sq / n - mean * mean == doctest::Approx(0.625).epsilon(0.03));

    // shape < 1 boost path
    sum = 0.0;
    for (int i = 0; i < n; ++i) sum += rng.gamma(0.5, 1.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("draw matches each family's mean") {
    const int n = 150000;
    auto mean_of = [&](const BaselineSpec& f, std::uint64_t seed) {
        Rng rng(seed);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += rng.draw(f);
        return s / n;
    };
    CHECK(mean_of(BaselineSpec(Family::Normal, 2.0, 3.0), 1) ==
          doctest::Approx(2.0).epsilon(0.03));
    CHECK(mean_of(BaselineSpec(Family::Gamma, 3.0, 2.0), 2) ==
          doctest::Approx(1.5).epsilon(0.02));
    CHECK(mean_of(BaselineSpec(Family::LogNormal, 0.0, 0.5), 3) ==
          doctest::Approx(std::exp(0.125)).epsilon(0.02));
    // Weibull(shape 2, scale 1): mean Gamma(1.5)
    CHECK(mean_of(BaselineSpec(Family::Weibull, 2.0, 1.0), 4) ==
          doctest::Approx(std::tgamma(1.5)).epsilon(0.02));
    // Pareto(alpha 3): mean 3/2, support (1, inf)
    CHECK(mean_of(BaselineSpec(Family::Pareto, 3.0), 5) ==
          doctest::Approx(1.5).epsilon(0.02));
}

TEST_CASE("Pareto draws respect the support boundary and tail") {
    Rng rng(99);
    const BaselineSpec pareto(Family::Pareto, 2.0);
    int above2 = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.draw(pareto);
        CHECK(x > 1.0);
        if (x > 2.0) ++above2;
    }
    // P(X > 2) = 2^-2 = 0.25
    CHECK(static_cast<double>(above2) / n == doctest::Approx(0.25).epsilon(0.03));
}

TEST_CASE("sample_family is deterministic and population-independent") {
    const FamilySpec fam{{BaselineSpec(Family::Normal, 0.0, 1.0), 20},
                         {BaselineSpec(Family::Normal, 1.0, 1.0), 30}};
    const MultiSample a = sample_family(fam, 7, 3);
    const MultiSample b = sample_family(fam, 7, 3);
    CHECK(a.samples() == b.samples());
    const MultiSample c = sample_family(fam, 7, 4);
    CHECK(a.sample(0) != c.sample(0));

    // changing one population's size must not disturb the other's stream
    const FamilySpec fam2{{BaselineSpec(Family::Normal, 0.0, 1.0), 25},
                          {BaselineSpec(Family::Normal, 1.0, 1.0), 30}};
    const MultiSample d = sample_family(fam2, 7, 3);
    CHECK(d.sample(1) == a.sample(1));
}

TEST_CASE("one-way ANOVA on a known dataset") {
    // groups {1,2,3} and {4,5,6}: F = 13.5 on (1, 4) df
    const MultiSample data({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    const TestResult res = anova_test(data);
    CHECK(res.statistic == doctest::Approx(13.5).epsilon(1e-12));
    CHECK(res.p_value == doctest::Approx(1.0 - fisher_f_cdf(1, 4, 13.5)).epsilon(1e-12));
    CHECK(res.method == TestMethod::ANOVA);
}

TEST_CASE("ANOVA guards the degenerate zero-variance case") {
    const MultiSample data({{1.0, 1.0}, {1.0, 1.0}});
    const TestResult res = anova_test(data);
    CHECK(res.statistic == 0.0);
    CHECK(res.p_value == 1.0);
}

TEST_CASE("Kruskal-Wallis on a known dataset") {
    // scipy.stats.kruskal([1,2,3],[4,5,6]): H = 3.857142857, p = 0.049535
    const MultiSample data({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}});
    const TestResult res = kruskal_wallis_test(data);
    CHECK(res.statistic == doctest::Approx(3.857142857142857).epsilon(1e-10));
    CHECK(res.p_value == doctest::Approx(0.049534613497536).epsilon(1e-6));
}

TEST_CASE("Kruskal-Wallis handles ties via midranks") {
    // scipy.stats.kruskal([1,1,2],[2,2,3]): H = 2.7222222222, p = 0.09896
    const MultiSample data({{1.0, 1.0, 2.0}, {2.0, 2.0, 3.0}});
    const TestResult res = kruskal_wallis_test(data);
    CHECK(res.statistic == doctest::Approx(2.722222222222222).epsilon(1e-8));
}

TEST_CASE("null study calibrates near the nominal level") {
    StudyConfig cfg;
    cfg.scenario = "two-sample-null";
    const BaselineSpec f0(Family::Normal, 0.0, 1.0);
    cfg.settings = {{{f0, 60}, {f0, 60}}};
    cfg.basis = BasisSpec{BasisTerm::identity(), BasisTerm::square()};
    cfg.constraint = ConstraintSpec(Matrix::Identity(2, 2), Vector::Zero(2));
    cfg.replicates = 500;
    cfg.seed = 20130810;
    const NullStudyResult res = run_null_study(cfg);
    CHECK(res.failures == 0);
    CHECK(res.rejection_rate > 0.02);
    CHECK(res.rejection_rate < 0.10);
    REQUIRE(res.qq.size() == 500);
    // QQ pairs are sorted in both coordinates and roughly on the diagonal
    CHECK(std::is_sorted(res.qq.begin(), res.qq.end()));
    double dmax = 0.0;
    for (const auto& [qt, qe] : res.qq) dmax = std::max(dmax, std::fabs(qt - qe));
    CHECK(dmax < 3.0);  // loose sanity bound on extreme quantiles
}

TEST_CASE("null study is reproducible for a fixed seed") {
    StudyConfig cfg;
    const BaselineSpec f0(Family::Gamma, 2.0, 1.0);
    cfg.settings = {{{f0, 40}, {f0, 50}}};
    cfg.basis = BasisSpec{BasisTerm::log(), BasisTerm::identity()};
    cfg.constraint = ConstraintSpec(Matrix::Identity(2, 2), Vector::Zero(2));
    cfg.replicates = 60;
    cfg.seed = 7;
    const NullStudyResult a = run_null_study(cfg);
    const NullStudyResult b = run_null_study(cfg);
    CHECK(a.statistic_draws == b.statistic_draws);
    cfg.threads = 4;
    const NullStudyResult c = run_null_study(cfg);
    CHECK(a.statistic_draws == c.statistic_draws);  // thread count cannot matter
}

TEST_CASE("local alternative study matches its theoretical noncentrality") {
    LocalStudyConfig cfg{BaselineSpec(Family::Normal, 0.0, 1.0),
                         {100, 100},
                         {Vector::Zero(2)},
                         {(Vector(2) << 2.0, 0.0).finished()},
                         BasisSpec{BasisTerm::identity(), BasisTerm::square()},
                         ConstraintSpec(Matrix::Identity(2, 2), Vector::Zero(2)),
                         400,
                         20130810};
    const LocalStudyResult res = run_local_alternative_study(cfg);
    // delta^2 = eta' Lambda eta with Lambda = diag(1/4, 1/2), eta = (2/sqrt(.5), 0)
    CHECK(res.delta2 == doctest::Approx(2.0).epsilon(1e-6));
    double mean = 0.0;
    for (double r : res.statistic_draws) mean += r;
    mean /= static_cast<double>(res.statistic_draws.size());
    // E chi^2_2(2) = 4; Monte Carlo mean should be in the neighbourhood
    CHECK(mean == doctest::Approx(4.0).epsilon(0.12));
}

TEST_CASE("power study orders methods and settings as configured") {
    StudyConfig cfg;
    const BaselineSpec f0(Family::Normal, 0.0, 1.0);
    const BaselineSpec f1(Family::Normal, 1.0, 1.0);
    cfg.settings = {{{f0, 40}, {f0, 40}}, {{f0, 40}, {f1, 40}}};
    cfg.basis = BasisSpec{BasisTerm::identity(), BasisTerm::square()};
    cfg.constraint = ConstraintSpec(Matrix::Identity(2, 2), Vector::Zero(2));
    cfg.replicates = 200;
    cfg.seed = 20130810;
    cfg.methods = {TestMethod::DELR, TestMethod::ANOVA};
    const PowerStudyResult res = run_power_study(cfg);
    REQUIRE(res.cells.size() == 4);
    CHECK(res.cells[0].setting == 0);
    CHECK(res.cells[0].method == TestMethod::DELR);
    CHECK(res.cells[1].method == TestMethod::ANOVA);
    CHECK(res.cells[2].setting == 1);
    // null setting near level, alternative clearly powered
    CHECK(res.cells[0].rate < 0.15);
    CHECK(res.cells[2].rate > 0.9);
    CHECK(res.cells[3].rate > 0.9);
    for (const auto& c : res.cells) {
        CHECK(c.std_error >= 0.0);
        CHECK(c.failures == 0);
    }
}
