#ifndef DRMDEL_MODEL_HPP
#define DRMDEL_MODEL_HPP

#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace drmdel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error hierarchy. data_error covers ingestion and domain violations,
// numeric_error covers failures of the numerical routines.
struct data_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Basis functions
// ---------------------------------------------------------------------------

// Closed enumeration of basis terms. Power covers sqrt(x), x^0.8, x^1.5 etc.
enum class TermKind { Identity, Square, Power, Log, LogSquare };

struct BasisTerm {
    TermKind kind = TermKind::Identity;
    double exponent = 1.0;  // only meaningful for Power

    static BasisTerm identity() { return {TermKind::Identity, 1.0}; }
    static BasisTerm square() { return {TermKind::Square, 2.0}; }
    static BasisTerm power(double p) {
        if (!(p > 0.0)) throw data_error("basis power exponent must be positive");
        return {TermKind::Power, p};
    }
    static BasisTerm log() { return {TermKind::Log, 0.0}; }
    static BasisTerm log_square() { return {TermKind::LogSquare, 0.0}; }

    // Terms that are undefined (or non-smooth) at x <= 0.
    bool needs_positive() const {
        switch (kind) {
            case TermKind::Identity:
            case TermKind::Square:
                return false;
            case TermKind::Power:
                return exponent != std::floor(exponent);
            case TermKind::Log:
            case TermKind::LogSquare:
                return true;
        }
        return true;
    }

    std::string name() const {
        switch (kind) {
            case TermKind::Identity: return "x";
            case TermKind::Square: return "x^2";
            case TermKind::Power: {
                std::ostringstream os;
                os << "x^" << exponent;
                return os.str();
            }
            case TermKind::Log: return "log(x)";
            case TermKind::LogSquare: return "log(x)^2";
        }
        return "?";
    }

    double eval(double x) const {
        switch (kind) {
            case TermKind::Identity: return x;
            case TermKind::Square: return x * x;
            case TermKind::Power:
                if (needs_positive() && x <= 0.0) throw_domain(x);
                return std::pow(x, exponent);
            case TermKind::Log:
                if (x <= 0.0) throw_domain(x);
                return std::log(x);
            case TermKind::LogSquare: {
                if (x <= 0.0) throw_domain(x);
                const double l = std::log(x);
                return l * l;
            }
        }
        return 0.0;
    }

    bool operator==(const BasisTerm& o) const {
        return kind == o.kind && (kind != TermKind::Power || exponent == o.exponent);
    }

  private:
    [[noreturn]] void throw_domain(double x) const {
        std::ostringstream os;
        os << "basis term " << name() << " undefined at x = " << x;
        throw data_error(os.str());
    }
};

struct BasisSpec {
    std::vector<BasisTerm> terms;

    BasisSpec() = default;
    BasisSpec(std::initializer_list<BasisTerm> ts) : terms(ts) { check(); }
    explicit BasisSpec(std::vector<BasisTerm> ts) : terms(std::move(ts)) { check(); }

    int dim() const { return static_cast<int>(terms.size()); }

    bool needs_positive() const {
        for (const auto& t : terms)
            if (t.needs_positive()) return true;
        return false;
    }

  private:
    void check() const {
        if (terms.empty()) throw data_error("basis must have at least one term");
        for (std::size_t i = 0; i < terms.size(); ++i)
            for (std::size_t j = i + 1; j < terms.size(); ++j)
                if (terms[i] == terms[j])
                    throw data_error("duplicate basis term: " + terms[i].name());
    }
};

// Evaluator for q(x). Pure; repeated evaluation is bit-identical.
class BasisFn {
  public:
    explicit BasisFn(BasisSpec spec) : spec_(std::move(spec)) {}

    int dim() const { return spec_.dim(); }
    const BasisSpec& spec() const { return spec_; }
    bool needs_positive() const { return spec_.needs_positive(); }

    Vector operator()(double x) const {
        Vector q(dim());
        for (int i = 0; i < dim(); ++i) q[i] = spec_.terms[i].eval(x);
        return q;
    }

    void eval_into(double x, Eigen::Ref<Vector> out) const {
        for (int i = 0; i < dim(); ++i) out[i] = spec_.terms[i].eval(x);
    }

  private:
    BasisSpec spec_;
};

inline BasisFn build_basis(const BasisSpec& spec) { return BasisFn(spec); }

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

// The m+1 observed samples; index 0 is the baseline. Observations are stored
// as given: no sorting, no deduplication.
class MultiSample {
  public:
    MultiSample() = default;
    explicit MultiSample(std::vector<std::vector<double>> samples)
        : samples_(std::move(samples)) {
        total_ = 0;
        for (const auto& s : samples_) total_ += s.size();
    }

    int num_populations() const { return static_cast<int>(samples_.size()); }
    int m() const { return num_populations() - 1; }
    std::size_t size(int k) const { return samples_.at(k).size(); }
    std::size_t total() const { return total_; }
    double proportion(int k) const {
        return static_cast<double>(size(k)) / static_cast<double>(total_);
    }
    const std::vector<double>& sample(int k) const { return samples_.at(k); }
    const std::vector<std::vector<double>>& samples() const { return samples_; }

    std::vector<double> pooled() const {
        std::vector<double> all;
        all.reserve(total_);
        for (const auto& s : samples_) all.insert(all.end(), s.begin(), s.end());
        return all;
    }

  private:
    std::vector<std::vector<double>> samples_;
    std::size_t total_ = 0;
};

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_dataset(const MultiSample& data, const BasisSpec& spec) {
    ValidationReport rep;
    if (data.num_populations() < 2)
        rep.violations.push_back("need at least two samples (m >= 1)");
    const bool pos = spec.needs_positive();
    for (int k = 0; k < data.num_populations(); ++k) {
        const auto& s = data.sample(k);
        if (s.empty()) {
            rep.violations.push_back("sample " + std::to_string(k) + " is empty");
            continue;
        }
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (!std::isfinite(s[j])) {
                std::ostringstream os;
                os << "sample " << k << " observation " << j << " is not finite";
                rep.violations.push_back(os.str());
            } else if (pos && s[j] <= 0.0) {
                std::ostringstream os;
                os << "sample " << k << " observation " << j << " (" << s[j]
                   << ") violates the positive-support requirement of the basis";
                rep.violations.push_back(os.str());
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Parameters and constraints
// ---------------------------------------------------------------------------

// Stacked DRM parameters. alpha has length m, beta has length m*d stacked
// block-wise as (beta_1, ..., beta_m). The baseline (alpha_0, beta_0) = 0 is
// implicit and never stored.
struct Theta {
    Vector alpha;
    Vector beta;

    Theta() = default;
    Theta(Vector a, Vector b) : alpha(std::move(a)), beta(std::move(b)) {}

    static Theta zero(int m, int d) {
        return Theta(Vector::Zero(m), Vector::Zero(m * d));
    }

    int m() const { return static_cast<int>(alpha.size()); }
    int d() const { return m() == 0 ? 0 : static_cast<int>(beta.size()) / m(); }

    Eigen::VectorBlock<const Vector> beta_block(int k, int d) const {
        return beta.segment(k * d, d);
    }

    Vector flatten() const {
        Vector t(alpha.size() + beta.size());
        t << alpha, beta;
        return t;
    }
    static Theta unflatten(const Vector& t, int m, int d) {
        return Theta(t.head(m), t.tail(m * d));
    }
};

// Linear hypothesis A * beta = b with A of full row rank q.
struct ConstraintSpec {
    Matrix A;
    Vector b;

    ConstraintSpec() = default;
    ConstraintSpec(Matrix A_, Vector b_) : A(std::move(A_)), b(std::move(b_)) {
        if (A.rows() == 0 || A.rows() > A.cols())
            throw data_error("constraint matrix must have 1 <= q <= m*d rows");
        if (b.size() != A.rows())
            throw data_error("constraint rhs length must equal the number of rows of A");
        Eigen::JacobiSVD<Matrix> svd(A);
        const double smin = svd.singularValues()(svd.singularValues().size() - 1);
        if (smin <= 1e-10 * std::max(1.0, svd.singularValues()(0)))
            throw data_error("constraint matrix is rank deficient");
    }

    int q() const { return static_cast<int>(A.rows()); }
    int md() const { return static_cast<int>(A.cols()); }
};

// ---------------------------------------------------------------------------
// Parametric embeddings
// ---------------------------------------------------------------------------

// Closed-form (alpha_k, beta_k) for a normal population N(mu_k, sigma_k)
// against baseline N(mu_0, sigma_0) with basis (x, x^2).
struct NormalDrmParams {
    double alpha;
    Eigen::Vector2d beta;
};

inline NormalDrmParams normal_drm_params(double mu0, double sigma0, double muk,
                                         double sigmak) {
    if (!(sigma0 > 0.0) || !(sigmak > 0.0))
        throw data_error("normal_drm_params: standard deviations must be positive");
    NormalDrmParams p;
    p.beta[0] = muk / (sigmak * sigmak) - mu0 / (sigma0 * sigma0);
    p.beta[1] = 1.0 / (2.0 * sigma0 * sigma0) - 1.0 / (2.0 * sigmak * sigmak);
    p.alpha = std::log(sigma0 / sigmak) + mu0 * mu0 / (2.0 * sigma0 * sigma0) -
              muk * muk / (2.0 * sigmak * sigmak);
    return p;
}

// Gamma(shape0, rate0) tilted by beta = (b_log, b_x) against basis (log x, x)
// is Gamma(shape0 + b_log, rate0 - b_x). Inverse embedding used in studies.
struct GammaParams {
    double shape;
    double rate;
};

inline GammaParams gamma_from_drm(double shape0, double rate0, double b_log,
                                  double b_x) {
    GammaParams g{shape0 + b_log, rate0 - b_x};
    if (!(g.shape > 0.0) || !(g.rate > 0.0))
        throw data_error("gamma tilt leaves the gamma family (nonpositive shape or rate)");
    return g;
}

// Normal(mu0, sigma0) tilted by beta = (b_x, b_x2) against basis (x, x^2).
struct NormalParams {
    double mu;
    double sigma;
};

inline NormalParams normal_from_drm(double mu0, double sigma0, double b_x,
                                    double b_x2) {
    const double prec = 1.0 / (sigma0 * sigma0) - 2.0 * b_x2;
    if (!(prec > 0.0))
        throw data_error("normal tilt leaves the normal family (nonpositive precision)");
    NormalParams p;
    p.sigma = std::sqrt(1.0 / prec);
    p.mu = (mu0 / (sigma0 * sigma0) + b_x) / prec;
    return p;
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

// Two columns `sample,value` with a header row; sample is a 0-based index.
inline MultiSample read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw data_error("empty CSV input");
    // tolerate a BOM and whitespace in the header
    auto compact = [](std::string s) {
        std::string out;
        for (char c : s)
            if (!std::isspace(static_cast<unsigned char>(c)) && c != '\r') out += c;
        return out;
    };
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (compact(line) != "sample,value")
        throw data_error("CSV header must be `sample,value`, got `" + line + "`");

    std::vector<std::vector<double>> samples;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string c = compact(line);
        if (c.empty()) continue;
        const auto comma = c.find(',');
        if (comma == std::string::npos)
            throw data_error("CSV line " + std::to_string(lineno) + ": missing comma");
        std::size_t pos = 0;
        long idx;
        double value;
        try {
            idx = std::stol(c.substr(0, comma), &pos);
            if (pos != comma) throw std::invalid_argument("trailing");
            value = std::stod(c.substr(comma + 1), &pos);
            if (pos != c.size() - comma - 1) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw data_error("CSV line " + std::to_string(lineno) + ": parse error");
        }
        if (idx < 0)
            throw data_error("CSV line " + std::to_string(lineno) + ": negative sample index");
        if (static_cast<std::size_t>(idx) >= samples.size())
            samples.resize(static_cast<std::size_t>(idx) + 1);
        samples[static_cast<std::size_t>(idx)].push_back(value);
    }
    for (std::size_t k = 0; k < samples.size(); ++k)
        if (samples[k].empty())
            throw data_error("sample indices must be contiguous; sample " +
                             std::to_string(k) + " has no observations");
    return MultiSample(std::move(samples));
}

inline MultiSample read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open " + path);
    return read_csv(in);
}

}  // namespace drmdel

#endif  // DRMDEL_MODEL_HPP
