// End-to-end tests for the drmtest command-line tool: JSON output schema,
// numerical golden values, CSV outputs, and exit-code conventions.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

using nlohmann::json;

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run(const std::string& args, bool merge_stderr = false) {
    std::string cmd = std::string(DRMTEST_BIN) + " " + args +
                      (merge_stderr ? " 2>&1" : " 2>/dev/null");
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    RunResult r;
    std::array<char, 4096> buf;
    size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        r.out.append(buf.data(), got);
    int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string tmp_path(const std::string& name) {
    return std::string("/tmp/drmtest_cli_") + name;
}

void write_file(const std::string& path, const std::string& body) {
    std::ofstream os(path);
    REQUIRE(os.good());
    os << body;
}

// Two identical samples (statistic should be exactly degenerate) plus a pair
// of clearly separated samples for rejection checks.
std::string identical_csv() {
    std::ostringstream os;
    os << "sample,value\n";
    const double vals[] = {-1.3, -0.7, -0.2, 0.1, 0.4, 0.9, 1.5, 2.1};
    for (int k = 0; k < 2; ++k)
        for (double v : vals) os << k << "," << v << "\n";
    return os.str();
}

std::string separated_csv() {
    std::ostringstream os;
    os << "sample,value\n";
    unsigned s = 12345u;
    auto unif = [&]() {
        s = s * 1664525u + 1013904223u;
        return (s >> 8) / 16777216.0;
    };
    for (int k = 0; k < 2; ++k)
        for (int i = 0; i < 120; ++i) {
            // Irwin-Hall sum of 12 uniforms: approximately N(6, 1).
            double z = 0.0;
            for (int j = 0; j < 12; ++j) z += unif();
            os << k << "," << (z - 6.0 + 2.5 * k) << "\n";
        }
    return os.str();
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    REQUIRE(is.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

}  // namespace

TEST_CASE("test subcommand on identical samples is degenerate at the null") {
    const std::string csv = tmp_path("same.csv");
    write_file(csv, identical_csv());
    RunResult r = run("test --input " + csv + " --basis x,x2 --hypothesis equal:all");
    REQUIRE(r.exit_code == 0);
    json doc = json::parse(r.out);

    CHECK(doc.at("command") == "test");
    CHECK(doc.at("method") == "DELR");
    CHECK(doc.at("df").get<int>() == 2);
    CHECK(doc.at("statistic").get<double>() == doctest::Approx(0.0).epsilon(1e-8));
    CHECK(doc.at("p_value").get<double>() == doctest::Approx(1.0));
    CHECK(doc.at("reject").get<bool>() == false);
    CHECK(doc.at("level").get<double>() == doctest::Approx(0.05));
    // Identical samples force the tilt parameters to zero.
    for (const auto& row : doc.at("theta_hat").at("beta"))
        for (const auto& v : row)
            CHECK(std::abs(v.get<double>()) < 1e-6);
    CHECK(doc.at("diagnostics").at("unconstrained").at("converged").get<bool>());
}

TEST_CASE("test subcommand rejects well-separated samples with every method") {
    const std::string csv = tmp_path("sep.csv");
    write_file(csv, separated_csv());
    for (const std::string method : {"delr", "wald", "anova", "kw"}) {
        RunResult r = run("test --input " + csv +
                          " --basis x --hypothesis equal:all --method " + method);
        REQUIRE(r.exit_code == 0);
        json doc = json::parse(r.out);
        CHECK(doc.at("p_value").get<double>() < 1e-4);
        CHECK(doc.at("reject").get<bool>());
    }
    RunResult r = run("test --input " + csv +
                      " --basis x --hypothesis equal:all --method perm "
                      "--reps 199 --seed 7");
    REQUIRE(r.exit_code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("p_value").get<double>() == doctest::Approx(1.0 / 200.0));
}

TEST_CASE("pairwise mode emits a p-value matrix with a null diagonal") {
    const std::string csv = tmp_path("sep.csv");
    write_file(csv, separated_csv());
    RunResult r = run("test --input " + csv +
                      " --basis x --pairwise --bonferroni");
    REQUIRE(r.exit_code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("mode") == "pairwise");
    CHECK(doc.at("bonferroni").get<bool>());
    CHECK(doc.at("comparisons").get<int>() == 1);
    const auto& p = doc.at("p_values");
    REQUIRE(p.size() == 2);
    CHECK(p[0][0].is_null());
    CHECK(p[1][1].is_null());
    CHECK(p[0][1].get<double>() < 1e-4);
    CHECK(p[0][1].get<double>() == doctest::Approx(p[1][0].get<double>()));
}

TEST_CASE("power subcommand reproduces the gamma tilt benchmark") {
    RunResult r = run(
        "power --f0 gamma:2,1 --rho 0.4,0.3,0.3 --basis x,logx "
        "--beta-star \"-1,1;-2,2\" --hypothesis \"lincomb:2*b1-b2=0\" "
        "--drift \"2,3;-1,0\"");
    REQUIRE(r.exit_code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("command") == "power");
    CHECK(doc.at("df").get<int>() == 2);
    CHECK(doc.at("delta2").get<double>() == doctest::Approx(10.2861).epsilon(5e-4));
    CHECK(doc.at("power").get<double>() == doctest::Approx(0.8268).epsilon(1e-3));
}

TEST_CASE("samplesize subcommand finds the smallest adequate design") {
    RunResult r = run(
        "samplesize --f0 gamma:2,1 --rho 0.4,0.3,0.3 --basis x,logx "
        "--beta-star \"-1,1;-2,2\" --hypothesis \"lincomb:2*b1-b2=0\" "
        "--shift \"0.5,1.5;0.5,0.5\" --target 0.8");
    REQUIRE(r.exit_code == 0);
    json doc = json::parse(r.out);
    CHECK(doc.at("command") == "samplesize");
    CHECK(doc.at("n_star").get<int>() == 50);
    CHECK(doc.at("power_at_n_star").get<double>() ==
          doctest::Approx(0.8030).epsilon(1e-3));
    CHECK(doc.at("power_at_n_star").get<double>() >= 0.8);
    CHECK(doc.at("target_power").get<double>() == doctest::Approx(0.8));
}

TEST_CASE("simulate subcommand writes rate and QQ tables") {
    const std::string cfg = tmp_path("study.json");
    const std::string rates = tmp_path("rates.csv");
    const std::string qq = tmp_path("qq.csv");
    json spec = {
        {"scenario", "cli-smoke"},
        {"families",
         {{{{"family", "normal"}, {"params", {0.0, 1.0}}, {"size", 40}},
           {{"family", "normal"}, {"params", {0.0, 1.0}}, {"size", 40}}},
          {{{"family", "normal"}, {"params", {0.0, 1.0}}, {"size", 40}},
           {{"family", "normal"}, {"params", {1.2, 1.0}}, {"size", 40}}}}},
        {"basis", "x,x2"},
        {"hypothesis", "equal:all"},
        {"level", 0.05},
        {"replicates", 150},
        {"seed", 20130810},
        {"methods", {"delr", "anova"}}};
    write_file(cfg, spec.dump(2));

    RunResult r = run("simulate --config " + cfg + " --out " + rates +
                      " --qq-out " + qq);
    REQUIRE(r.exit_code == 0);

    auto lines = read_lines(rates);
    REQUIRE(lines.size() == 5);  // header + 2 settings x 2 methods
    CHECK(lines[0] == "setting,method,rate,se,failures");
    double null_rate = -1.0, alt_rate = -1.0;
    for (size_t i = 1; i < lines.size(); ++i) {
        std::istringstream ls(lines[i]);
        std::string setting, method, rest;
        std::getline(ls, setting, ',');
        std::getline(ls, method, ',');
        std::getline(ls, rest, ',');
        const double rate = std::stod(rest);
        CHECK(rate >= 0.0);
        CHECK(rate <= 1.0);
        if (method == "DELR" && setting == "0") null_rate = rate;
        if (method == "DELR" && setting == "1") alt_rate = rate;
    }
    CHECK(null_rate < 0.15);
    CHECK(alt_rate > 0.8);

    auto qlines = read_lines(qq);
    CHECK(qlines[0] == "chi2_quantile,empirical_quantile");
    CHECK(qlines.size() > 100);

    // Same seed, same results.
    const std::string rates2 = tmp_path("rates2.csv");
    RunResult r2 = run("simulate --config " + cfg + " --out " + rates2);
    REQUIRE(r2.exit_code == 0);
    CHECK(read_lines(rates2) == lines);
}

TEST_CASE("density subcommand writes a nonnegative grid that covers the data") {
    const std::string csv = tmp_path("sep.csv");
    write_file(csv, separated_csv());
    RunResult r = run("density --input " + csv +
                      " --basis x --population 1 --grid-points 41");
    REQUIRE(r.exit_code == 0);
    std::istringstream is(r.out);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "x,density");
    int rows = 0;
    double mass = 0.0, prev_x = 0.0, step = 0.0;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::string xs, ds;
        std::getline(ls, xs, ',');
        std::getline(ls, ds, ',');
        const double x = std::stod(xs), d = std::stod(ds);
        CHECK(d >= 0.0);
        if (rows > 0) step = x - prev_x;
        prev_x = x;
        mass += d;
        ++rows;
    }
    CHECK(rows == 41);
    // Riemann sum of the kernel estimate over the grid is close to one.
    CHECK(mass * step == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("exit codes distinguish usage, data, and numerical failures") {
    CHECK(run("--definitely-not-a-flag", true).exit_code == 2);
    CHECK(run("test", true).exit_code == 2);  // missing required --input
    CHECK(run("test --input /nonexistent/file.csv --basis x", true).exit_code == 3);

    const std::string bad = tmp_path("bad.csv");
    write_file(bad, "sample,value\n0,1.0\n0,oops\n");
    CHECK(run("test --input " + bad + " --basis x", true).exit_code == 3);

    const std::string csv = tmp_path("same.csv");
    write_file(csv, identical_csv());
    CHECK(run("test --input " + csv + " --basis x --hypothesis equal:9,10",
              true).exit_code == 3);

    // A Pareto baseline without enough moments for the x^2 tilt diverges.
    CHECK(run("power --f0 pareto:1.2,1 --rho 0.5,0.5 --basis x2 "
              "--beta-star 0 --hypothesis zero:1 --drift 1",
              true).exit_code == 4);
}
