// drmtest: empirical-likelihood inference for multiple samples under the
// density ratio model. One subcommand per task, one JSON document (or CSV
// table) on standard output; diagnostics go to standard error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "drmdel/estimate.hpp"
#include "drmdel/hypothesis.hpp"
#include "drmdel/infer.hpp"
#include "drmdel/power.hpp"
#include "drmdel/sim.hpp"

// CLI11.hpp vendored as a flat header; nlohmann/json.hpp resolves via the
// vendor include dir (json.hpp is at the top level there too).

using json = nlohmann::json;
using namespace drmdel;

namespace {

constexpr std::uint64_t kDefaultSeed = 20130810;  // fixed so runs reproduce

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

LogLevel log_level() {
    const char* env = std::getenv("DRMTEST_LOG");
    if (!env) return LogLevel::Error;
    const std::string v(env);
    if (v == "debug") return LogLevel::Debug;
    if (v == "info") return LogLevel::Info;
    if (v == "warn") return LogLevel::Warn;
    return LogLevel::Error;
}

void log_line(LogLevel lvl, const std::string& msg) {
    if (lvl <= log_level()) std::cerr << "drmtest: " << msg << "\n";
}

// --- small parsers -------------------------------------------------------

BasisSpec parse_basis(const std::string& spec) {
    std::vector<BasisTerm> terms;
    std::istringstream in(spec);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok == "x")
            terms.push_back(BasisTerm::identity());
        else if (tok == "x2")
            terms.push_back(BasisTerm::square());
        else if (tok == "logx")
            terms.push_back(BasisTerm::log());
        else if (tok == "logx2")
            terms.push_back(BasisTerm::log_square());
        else if (tok.size() > 1 && tok[0] == 'x') {
            double p;
            try {
                p = std::stod(tok.substr(1));
            } catch (const std::exception&) {
                throw data_error("unknown basis term `" + tok + "`");
            }
            terms.push_back(BasisTerm::power(p));
        } else {
            throw data_error("unknown basis term `" + tok +
                             "` (expected x, x2, x<p>, logx, logx2)");
        }
    }
    if (terms.empty()) throw data_error("empty basis specification");
    return BasisSpec(std::move(terms));
}

std::vector<double> parse_numbers(const std::string& s, char sep = ',') {
    std::vector<double> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, sep)) {
        try {
            out.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw data_error("bad number `" + tok + "` in `" + s + "`");
        }
    }
    if (out.empty()) throw data_error("empty numeric list `" + s + "`");
    return out;
}

// semicolon-separated blocks of comma-separated numbers, e.g. "-1,1;-2,2"
std::vector<Vector> parse_blocks(const std::string& s, int d) {
    std::vector<Vector> out;
    std::istringstream in(s);
    std::string blk;
    while (std::getline(in, blk, ';')) {
        const std::vector<double> v = parse_numbers(blk);
        if (static_cast<int>(v.size()) != d)
            throw data_error("block `" + blk + "` has " + std::to_string(v.size()) +
                             " components, expected " + std::to_string(d));
        out.push_back(Eigen::Map<const Vector>(v.data(), d));
    }
    if (out.empty()) throw data_error("empty block list `" + s + "`");
    return out;
}

Family parse_family_name(const std::string& name) {
    if (name == "normal") return Family::Normal;
    if (name == "gamma") return Family::Gamma;
    if (name == "lognormal") return Family::LogNormal;
    if (name == "pareto") return Family::Pareto;
    if (name == "weibull") return Family::Weibull;
    throw data_error("unknown family `" + name +
                     "` (expected normal, gamma, lognormal, pareto, weibull)");
}

// "gamma:2,1" / "normal:0,1" / "pareto:3"
BaselineSpec parse_baseline(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos)
        throw data_error("expected `family:p1[,p2]`, got `" + s + "`");
    const Family fam = parse_family_name(s.substr(0, colon));
    const std::vector<double> p = parse_numbers(s.substr(colon + 1));
    if (p.size() == 1) return BaselineSpec(fam, p[0]);
    if (p.size() == 2) return BaselineSpec(fam, p[0], p[1]);
    throw data_error("family `" + s + "` has too many parameters");
}

TestMethod parse_method(const std::string& name) {
    if (name == "delr") return TestMethod::DELR;
    if (name == "wald") return TestMethod::Wald;
    if (name == "perm") return TestMethod::Permutation;
    if (name == "anova") return TestMethod::ANOVA;
    if (name == "kw") return TestMethod::KruskalWallis;
    throw data_error("unknown method `" + name +
                     "` (expected delr, wald, perm, anova, kw)");
}

// --- output plumbing -----------------------------------------------------

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw data_error("cannot open output file `" + out_path + "`");
    out << text;
}

json theta_to_json(const Theta& t) {
    json j;
    j["alpha"] = std::vector<double>(t.alpha.data(), t.alpha.data() + t.alpha.size());
    j["beta"] = std::vector<double>(t.beta.data(), t.beta.data() + t.beta.size());
    return j;
}

json fit_diagnostics(const FitResult& fit) {
    json j;
    j["iterations"] = fit.iterations;
    j["gradient_norm"] = fit.gradient_norm;
    j["converged"] = fit.converged;
    return j;
}

// --- subcommand payloads -------------------------------------------------

struct TestArgs {
    std::string input, basis = "x,x2", hypothesis, method = "delr", out;
    std::string format = "json";
    double level = 0.05;
    std::uint64_t seed = kDefaultSeed;
    int reps = 199;
    bool pairwise = false;
    bool bonferroni = false;
};

int run_test(const TestArgs& a) {
    const MultiSample data = read_csv_file(a.input);
    const BasisSpec bspec = parse_basis(a.basis);
    const BasisFn basis = build_basis(bspec);
    const int m = data.m(), d = basis.dim();
    const TestMethod method = parse_method(a.method);

    if (a.pairwise) {
        // p-value matrix over all population pairs; every pairwise DRM is fit
        // on the two samples alone with the full-equality hypothesis.
        const int npop = m + 1;
        const int ncomp = npop * (npop - 1) / 2;
        std::vector<std::vector<double>> pmat(
            npop, std::vector<double>(npop, std::numeric_limits<double>::quiet_NaN()));
        const ConstraintSpec c(Matrix::Identity(d, d), Vector::Zero(d));
        for (int i = 0; i < npop; ++i) {
            for (int j = i + 1; j < npop; ++j) {
                const MultiSample pair({data.sample(i), data.sample(j)});
                TestResult r;
                switch (method) {
                    case TestMethod::DELR: r = delr_test(pair, basis, c); break;
                    case TestMethod::Wald: r = wald_test(pair, basis, c); break;
                    case TestMethod::Permutation:
                        r = permutation_test(pair, basis, c, a.reps, a.seed);
                        break;
                    default:
                        throw data_error("pairwise mode supports delr, wald, perm");
                }
                double p = r.p_value;
                if (a.bonferroni) p = std::min(1.0, p * ncomp);
                pmat[i][j] = pmat[j][i] = p;
            }
        }
        json doc;
        doc["command"] = "test";
        doc["mode"] = "pairwise";
        doc["method"] = method_name(method);
        doc["level"] = a.level;
        doc["bonferroni"] = a.bonferroni;
        doc["comparisons"] = ncomp;
        doc["p_values"] = pmat;
        emit(doc.dump(2) + "\n", a.out);
        return 0;
    }

    if (a.hypothesis.empty())
        throw data_error("--hypothesis is required unless --pairwise is given");
    const ConstraintSpec c = parse_hypothesis(a.hypothesis, m, d);

    TestResult r;
    switch (method) {
        case TestMethod::DELR: r = delr_test(data, basis, c); break;
        case TestMethod::Wald: r = wald_test(data, basis, c); break;
        case TestMethod::Permutation:
            r = permutation_test(data, basis, c, a.reps, a.seed);
            break;
        case TestMethod::ANOVA: r = anova_test(data); break;
        case TestMethod::KruskalWallis: r = kruskal_wallis_test(data); break;
    }

    json doc;
    doc["command"] = "test";
    doc["method"] = method_name(r.method);
    doc["statistic"] = r.statistic;
    doc["df"] = r.df;
    doc["p_value"] = r.p_value;
    doc["level"] = a.level;
    doc["reject"] = r.p_value < a.level;
    if (r.fit_unconstrained) {
        doc["theta_hat"] = theta_to_json(r.fit_unconstrained->theta_hat);
        doc["diagnostics"]["unconstrained"] = fit_diagnostics(*r.fit_unconstrained);
    }
    if (r.fit_constrained)
        doc["diagnostics"]["constrained"] = fit_diagnostics(*r.fit_constrained);
    emit(doc.dump(2) + "\n", a.out);
    return 0;
}

struct PowerArgs {
    std::string f0, basis, beta_star, hypothesis, drift, rho;
    double level = 0.05;
    std::string out;
};

int run_power(const PowerArgs& a) {
    const BaselineSpec f0 = parse_baseline(a.f0);
    const BasisSpec bspec = parse_basis(a.basis);
    const BasisFn basis = build_basis(bspec);
    const int d = basis.dim();
    const std::vector<Vector> beta_star = parse_blocks(a.beta_star, d);
    const std::vector<Vector> drifts = parse_blocks(a.drift, d);
    const int m = static_cast<int>(beta_star.size());
    const std::vector<double> rho = parse_numbers(a.rho);
    if (static_cast<int>(rho.size()) != m + 1)
        throw data_error("--rho needs m+1 proportions");
    const ConstraintSpec c = parse_hypothesis(a.hypothesis, m, d);

    LocalAlternative alt;
    alt.beta_star = beta_star;
    alt.drifts = drifts;
    alt.rho = rho;
    alt.validate(&c);

    log_line(LogLevel::Info, "computing information matrix by quadrature");
    const InfoMatrix U = theoretical_information(f0, beta_star, rho, basis);
    const double delta2 = noncentrality(alt, U, c);

    json doc;
    doc["command"] = "power";
    doc["delta2"] = delta2;
    doc["df"] = c.q();
    doc["level"] = a.level;
    doc["power"] = local_power(delta2, c.q(), a.level);
    emit(doc.dump(2) + "\n", a.out);
    return 0;
}

struct SampleSizeArgs {
    std::string f0, basis, beta_star, hypothesis, shift, rho;
    double level = 0.05;
    double target = 0.8;
    std::string out;
};

int run_samplesize(const SampleSizeArgs& a) {
    const BaselineSpec f0 = parse_baseline(a.f0);
    const BasisFn basis = build_basis(parse_basis(a.basis));
    const int d = basis.dim();
    const std::vector<Vector> beta_star = parse_blocks(a.beta_star, d);
    const std::vector<Vector> shifts = parse_blocks(a.shift, d);
    const int m = static_cast<int>(beta_star.size());
    const std::vector<double> rho = parse_numbers(a.rho);
    if (static_cast<int>(rho.size()) != m + 1)
        throw data_error("--rho needs m+1 proportions");
    const ConstraintSpec c = parse_hypothesis(a.hypothesis, m, d);

    const SampleSizeResult res =
        sample_size(a.target, a.level, shifts, rho, f0, beta_star, c, basis);
    json doc;
    doc["command"] = "samplesize";
    doc["n_star"] = res.n_star;
    doc["power_at_n_star"] = res.power_at_n_star;
    doc["delta2_at_n_star"] = res.delta2_at_n_star;
    doc["target_power"] = a.target;
    doc["level"] = a.level;
    emit(doc.dump(2) + "\n", a.out);
    return 0;
}

struct SimulateArgs {
    std::string config, out, qq_out;
    int threads = 0;
};

StudyConfig load_study_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open study config `" + path + "`");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw data_error("bad JSON in `" + path + "`: " + e.what());
    }

    StudyConfig cfg;
    try {
        cfg.scenario = j.value("scenario", std::string("study"));
        cfg.basis = parse_basis(j.at("basis").get<std::string>());
        const int d = cfg.basis.dim();
        for (const auto& setting : j.at("families")) {
            FamilySpec fam;
            for (const auto& pop : setting) {
                const Family f =
                    parse_family_name(pop.at("family").get<std::string>());
                const std::vector<double> p =
                    pop.at("params").get<std::vector<double>>();
                const std::size_t size = pop.at("size").get<std::size_t>();
                if (p.empty() || p.size() > 2)
                    throw data_error("family params must have 1 or 2 entries");
                fam.push_back({p.size() == 1 ? BaselineSpec(f, p[0])
                                             : BaselineSpec(f, p[0], p[1]),
                               size});
            }
            if (fam.size() < 2)
                throw data_error("each setting needs a baseline and >= 1 sample");
            cfg.settings.push_back(std::move(fam));
        }
        if (cfg.settings.empty()) throw data_error("no settings in study config");
        const int m = static_cast<int>(cfg.settings[0].size()) - 1;
        cfg.constraint =
            parse_hypothesis(j.at("hypothesis").get<std::string>(), m, d);
        cfg.level = j.value("level", 0.05);
        cfg.replicates = j.value("replicates", 2000);
        cfg.seed = j.value("seed", kDefaultSeed);
        if (j.contains("methods")) {
            cfg.methods.clear();
            for (const auto& name : j.at("methods"))
                cfg.methods.push_back(parse_method(name.get<std::string>()));
        }
        cfg.permutation_reps = j.value("permutation_reps", 199);
    } catch (const json::exception& e) {
        throw data_error("bad study config `" + path + "`: " + e.what());
    }
    return cfg;
}

int run_simulate(const SimulateArgs& a) {
    StudyConfig cfg = load_study_config(a.config);
    cfg.threads = a.threads;

    log_line(LogLevel::Info, "running " + std::to_string(cfg.settings.size()) +
                                 " setting(s) x " + std::to_string(cfg.replicates) +
                                 " replicates");
    const PowerStudyResult res = run_power_study(cfg);

    std::ostringstream csv;
    csv << "setting,method,rate,se,failures\n";
    for (const auto& cell : res.cells)
        csv << cell.setting << "," << method_name(cell.method) << "," << cell.rate
            << "," << cell.std_error << "," << cell.failures << "\n";
    emit(csv.str(), a.out);

    if (!a.qq_out.empty()) {
        // QQ pairs of the DELR statistic under setting 0 against chi^2_q
        const NullStudyResult nullres = run_null_study(cfg);
        if (nullres.failure_warning)
            log_line(LogLevel::Warn, "more than 0.1% of null replicates failed");
        std::ostringstream qq;
        qq << "chi2_quantile,empirical_quantile\n";
        for (const auto& [t, e] : nullres.qq) qq << t << "," << e << "\n";
        emit(qq.str(), a.qq_out);
    }
    return 0;
}

struct DensityArgs {
    std::string input, basis = "x,x2", out;
    int population = 0;
    double bandwidth = 0.0;  // 0 = Silverman
    double grid_min = 0.0, grid_max = 0.0;
    int grid_points = 201;
};

int run_density(const DensityArgs& a) {
    const MultiSample data = read_csv_file(a.input);
    const BasisFn basis = build_basis(parse_basis(a.basis));
    const FitResult fit = fit_mele(data, basis);
    const WeightedBaseline wb = baseline_weights(fit, data, basis);
    if (a.population < 0 || a.population > data.m())
        throw data_error("--population out of range");

    double lo = a.grid_min, hi = a.grid_max;
    if (lo == 0.0 && hi == 0.0) {
        const auto& x = wb.sorted_points();
        const double span = x.back() - x.front();
        lo = x.front() - 0.1 * span;
        hi = x.back() + 0.1 * span;
    }
    if (!(hi > lo) || a.grid_points < 2)
        throw data_error("bad density grid parameters");
    const double bw = a.bandwidth > 0.0 ? a.bandwidth
                                        : silverman_bandwidth(wb, a.population);

    std::vector<double> grid(a.grid_points);
    for (int i = 0; i < a.grid_points; ++i)
        grid[i] = lo + (hi - lo) * i / (a.grid_points - 1);
    const std::vector<double> dens = el_kernel_density(wb, a.population, bw, grid);

    std::ostringstream csv;
    csv << "x,density\n";
    for (int i = 0; i < a.grid_points; ++i) csv << grid[i] << "," << dens[i] << "\n";
    emit(csv.str(), a.out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "drmtest: multi-sample empirical-likelihood tests under the density "
        "ratio model"};
    app.require_subcommand(1);

    TestArgs ta;
    CLI::App* test = app.add_subcommand("test", "Run a hypothesis test on CSV data");
    test->add_option("--input", ta.input, "CSV file (header `sample,value`)")
        ->required();
    test->add_option("--basis", ta.basis, "basis terms, e.g. x,x2 or logx,x");
    test->add_option("--hypothesis", ta.hypothesis,
                     "hypothesis spec, e.g. equal:all");
    test->add_option("--level", ta.level, "significance level");
    test->add_option("--method", ta.method, "delr|wald|perm|anova|kw");
    test->add_option("--reps", ta.reps, "permutation replicates");
    test->add_option("--seed", ta.seed, "RNG seed (permutation)");
    test->add_flag("--pairwise", ta.pairwise, "all pairwise two-sample tests");
    test->add_flag("--bonferroni", ta.bonferroni,
                   "Bonferroni-adjust pairwise p-values");
    test->add_option("--out", ta.out, "output path (default stdout)");
    test->add_option("--format", ta.format, "json (default)");

    PowerArgs pa;
    CLI::App* power =
        app.add_subcommand("power", "Local power of the DELR test");
    power->add_option("--f0", pa.f0, "baseline, e.g. gamma:2,1")->required();
    power->add_option("--rho", pa.rho, "m+1 sampling proportions")->required();
    power->add_option("--basis", pa.basis, "basis terms")->required();
    power->add_option("--beta-star", pa.beta_star, "null beta blocks, `;`-separated")
        ->required();
    power->add_option("--hypothesis", pa.hypothesis, "hypothesis spec")->required();
    power->add_option("--drift", pa.drift, "local drift blocks c_k")->required();
    power->add_option("--level", pa.level, "significance level");
    power->add_option("--out", pa.out, "output path");

    SampleSizeArgs sa;
    CLI::App* ssize =
        app.add_subcommand("samplesize", "Smallest n reaching a target power");
    ssize->add_option("--f0", sa.f0, "baseline, e.g. gamma:2,1")->required();
    ssize->add_option("--rho", sa.rho, "m+1 sampling proportions")->required();
    ssize->add_option("--basis", sa.basis, "basis terms")->required();
    ssize->add_option("--beta-star", sa.beta_star, "null beta blocks")->required();
    ssize->add_option("--hypothesis", sa.hypothesis, "hypothesis spec")->required();
    ssize->add_option("--shift", sa.shift, "per-sample shift blocks")->required();
    ssize->add_option("--target", sa.target, "target power (default 0.8)");
    ssize->add_option("--level", sa.level, "significance level");
    ssize->add_option("--out", sa.out, "output path");

    SimulateArgs ma;
    CLI::App* simulate =
        app.add_subcommand("simulate", "Monte Carlo study from a JSON config");
    simulate->add_option("--config", ma.config, "study config JSON")->required();
    simulate->add_option("--out", ma.out, "rates CSV path (default stdout)");
    simulate->add_option("--qq-out", ma.qq_out,
                         "optional QQ-pairs CSV for the null setting");
    simulate->add_option("--threads", ma.threads,
                         "worker threads (0 = hardware concurrency)");

    DensityArgs da;
    CLI::App* density =
        app.add_subcommand("density", "EL-weighted kernel density estimate");
    density->add_option("--input", da.input, "CSV file")->required();
    density->add_option("--basis", da.basis, "basis terms");
    density->add_option("--population", da.population, "population index (0 = baseline)");
    density->add_option("--bandwidth", da.bandwidth, "kernel bandwidth (0 = Silverman)");
    density->add_option("--grid-min", da.grid_min, "grid lower end");
    density->add_option("--grid-max", da.grid_max, "grid upper end");
    density->add_option("--grid-points", da.grid_points, "grid size");
    density->add_option("--out", da.out, "output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*test) return run_test(ta);
        if (*power) return run_power(pa);
        if (*ssize) return run_samplesize(sa);
        if (*simulate) return run_simulate(ma);
        if (*density) return run_density(da);
    } catch (const fit_error& e) {
        std::cerr << "drmtest: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const data_error& e) {
        std::cerr << "drmtest: " << e.what() << "\n";
        return 3;
    } catch (const numeric_error& e) {
        std::cerr << "drmtest: numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "drmtest: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
