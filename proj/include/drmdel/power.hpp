#ifndef DRMDEL_POWER_HPP
#define DRMDEL_POWER_HPP

#include <cmath>
#include <string>
#include <vector>

#include "drmdel/infer.hpp"
#include "drmdel/quadrature.hpp"

namespace drmdel {

// ---------------------------------------------------------------------------
// Baseline distributions for analytic power work
// ---------------------------------------------------------------------------

enum class Family { Normal, Gamma, LogNormal, Pareto, Weibull };

inline const char* family_name(Family f) {
    switch (f) {
        case Family::Normal: return "normal";
        case Family::Gamma: return "gamma";
        case Family::LogNormal: return "lognormal";
        case Family::Pareto: return "pareto";
        case Family::Weibull: return "weibull";
    }
    return "?";
}

// A parametric baseline F_0. Parameter meaning by family:
//   normal(mu, sigma), gamma(shape, rate), lognormal(mu, sigma of log),
//   pareto(shape; support x > 1), weibull(shape, scale).
struct BaselineSpec {
    Family family;
    double p1;
    double p2;

    BaselineSpec(Family f, double a, double b = 0.0) : family(f), p1(a), p2(b) {
        validate_params();
        // density must integrate to 1; catches bad parameter combinations
        auto pdf = [this](double x) { return Vector::Constant(1, this->pdf_at(x)); };
        const double total = family == Family::Normal
                                 ? quad::integrate_realline(pdf, 1e-10)[0]
                                 : quad::integrate_halfline(pdf, support_lo(), 1e-10)[0];
        if (std::fabs(total - 1.0) > 1e-8)
            throw numeric_error("baseline density does not integrate to 1");
    }

    double support_lo() const { return family == Family::Pareto ? 1.0 : 0.0; }
    bool whole_line() const { return family == Family::Normal; }

    double log_pdf(double x) const {
        switch (family) {
            case Family::Normal: {
                const double z = (x - p1) / p2;
                return -0.5 * z * z - std::log(p2) - 0.5 * std::log(2.0 * M_PI);
            }
            case Family::Gamma:
                if (x <= 0.0) return -std::numeric_limits<double>::infinity();
                return p1 * std::log(p2) + (p1 - 1.0) * std::log(x) - p2 * x -
                       std::lgamma(p1);
            case Family::LogNormal: {
                if (x <= 0.0) return -std::numeric_limits<double>::infinity();
                const double z = (std::log(x) - p1) / p2;
                return -0.5 * z * z - std::log(x * p2) - 0.5 * std::log(2.0 * M_PI);
            }
            case Family::Pareto:
                if (x <= 1.0) return -std::numeric_limits<double>::infinity();
                return std::log(p1) - (p1 + 1.0) * std::log(x);
            case Family::Weibull: {
                if (x <= 0.0) return -std::numeric_limits<double>::infinity();
                const double z = x / p2;
                return std::log(p1 / p2) + (p1 - 1.0) * std::log(z) -
                       std::pow(z, p1);
            }
        }
        return -std::numeric_limits<double>::infinity();
    }

    double pdf_at(double x) const { return std::exp(log_pdf(x)); }

  private:
    void validate_params() const {
        bool ok = true;
        switch (family) {
            case Family::Normal: ok = p2 > 0.0; break;
            case Family::Gamma: ok = p1 > 0.0 && p2 > 0.0; break;
            case Family::LogNormal: ok = p2 > 0.0; break;
            case Family::Pareto: ok = p1 > 0.0; break;
            case Family::Weibull: ok = p1 > 0.0 && p2 > 0.0; break;
        }
        if (!ok) throw data_error("invalid baseline parameters for family " +
                                  std::string(family_name(family)));
    }
};

// Local alternative beta_k = beta_k* + n_k^{-1/2} c_k with limiting
// proportions rho (length m+1, index 0 is the baseline).
struct LocalAlternative {
    std::vector<Vector> beta_star;  // m blocks of length d
    std::vector<Vector> drifts;     // m blocks of length d (zero allowed)
    std::vector<double> rho;        // m+1 proportions summing to 1

    int m() const { return static_cast<int>(beta_star.size()); }
    int d() const { return beta_star.empty() ? 0 : static_cast<int>(beta_star[0].size()); }

    Vector stacked_beta_star() const {
        Vector b(m() * d());
        for (int k = 0; k < m(); ++k) b.segment(k * d(), d()) = beta_star[k];
        return b;
    }

    // eta = (rho_1^{-1/2} c_1', ..., rho_m^{-1/2} c_m')'
    Vector eta() const {
        Vector e(m() * d());
        for (int k = 0; k < m(); ++k)
            e.segment(k * d(), d()) = drifts[k] / std::sqrt(rho[k + 1]);
        return e;
    }

    void validate(const ConstraintSpec* c = nullptr) const {
        if (m() < 1) throw data_error("local alternative needs m >= 1");
        if (static_cast<int>(rho.size()) != m() + 1 ||
            static_cast<int>(drifts.size()) != m())
            throw data_error("local alternative has inconsistent lengths");
        double sum = 0.0;
        for (double r : rho) {
            if (!(r > 0.0 && r < 1.0))
                throw data_error("each proportion must lie in (0,1)");
            sum += r;
        }
        if (std::fabs(sum - 1.0) > 1e-10)
            throw data_error("proportions must sum to 1");
        if (c) {
            const Vector resid = c->A * stacked_beta_star() - c->b;
            if (resid.lpNorm<Eigen::Infinity>() > 1e-10)
                throw data_error("beta* does not satisfy the null constraint");
        }
    }
};

// ---------------------------------------------------------------------------
// Theoretical information matrix by quadrature
// ---------------------------------------------------------------------------

// U with blocks E0{H}, E0{H (x) q'}, E0{H (x) qq'} where H is built from the
// population tilts at beta* and the limiting proportions. alpha_k* is always
// recomputed from beta_k* as -log E0 exp(beta_k' q), so callers cannot pass
// inconsistent normalizing constants.
inline InfoMatrix theoretical_information(const BaselineSpec& f0,
                                          const std::vector<Vector>& beta_star,
                                          const std::vector<double>& rho,
                                          const BasisFn& basis) {
    const int m = static_cast<int>(beta_star.size());
    const int d = basis.dim();
    if (static_cast<int>(rho.size()) != m + 1)
        throw data_error("rho must have m+1 entries");

    auto integrate_any = [&](auto&& f, double tol) {
        return f0.whole_line() ? quad::integrate_realline(f, tol)
                               : quad::integrate_halfline(f, f0.support_lo(), tol);
    };

    // normalizing constants: alpha_k = -log E0 exp(beta_k' q)
    std::vector<double> alpha(m);
    for (int k = 0; k < m; ++k) {
        auto mgf = [&](double x) -> Vector {
            const double lp = f0.log_pdf(x);
            if (!std::isfinite(lp)) return Vector::Zero(1);
            return Vector::Constant(1, std::exp(beta_star[k].dot(basis(x)) + lp));
        };
        double val;
        try {
            val = integrate_any(mgf, 1e-10)[0];
        } catch (const numeric_error&) {
            throw numeric_error("moment E0 exp(beta_" + std::to_string(k + 1) +
                                "' q(x)) diverges for this baseline");
        }
        if (!std::isfinite(val) || !(val > 0.0))
            throw numeric_error("moment E0 exp(beta_" + std::to_string(k + 1) +
                                "' q(x)) diverges for this baseline");
        alpha[k] = -std::log(val);
    }

    const int dim = m * (d + 1);
    auto integrand = [&](double x) -> Vector {
        const double lp = f0.log_pdf(x);
        Vector flat = Vector::Zero(dim * dim);
        if (!std::isfinite(lp)) return flat;
        const Vector q = basis(x);

        // h_k = rho_k phi_k with a max-shift; the shift e^{mx} is folded into
        // the density factor below so neither piece overflows on its own:
        // H f0 = e^{mx + log f0} (diag(h') - h'h'^T/s')
        Vector la(m);
        for (int k = 0; k < m; ++k)
            la[k] = std::log(rho[k + 1]) + alpha[k] + beta_star[k].dot(q);
        const double mx = std::max(0.0, la.maxCoeff());
        const double scale = std::exp(mx + lp);
        if (scale == 0.0) return flat;
        Vector hp = (la.array() - mx).exp();
        const double sp = rho[0] * std::exp(-mx) + hp.sum();
        Matrix H = Matrix(hp.asDiagonal()) - hp * hp.transpose() / sp;

        Vector Q(d + 1);
        Q[0] = 1.0;
        Q.tail(d) = q;
        Eigen::Map<Matrix> M(flat.data(), dim, dim);
        for (int t = 0; t < m; ++t) {
            for (int u = 0; u < m; ++u) {
                M(t, u) = H(t, u);
                M.block(t, m + u * d, 1, d) = H(t, u) * q.transpose();
                M.block(m + t * d, u, d, 1) = H(t, u) * q;
                M.block(m + t * d, m + u * d, d, d) = H(t, u) * (q * q.transpose());
            }
        }
        flat *= scale;
        return flat;
    };

    Vector flat = integrate_any(integrand, 1e-9);
    Matrix U = Eigen::Map<Matrix>(flat.data(), dim, dim);
    U = 0.5 * (U + U.transpose());
    return detail::make_info(std::move(U), m, d);
}

// ---------------------------------------------------------------------------
// Local power analytics
// ---------------------------------------------------------------------------

// Null-space map J with J' = (-(D1^{-1} D2)', I_{md-q}) after column pivoting
// of A = (D1, D2); when q = md the constraint pins beta fully and the "full"
// marker is set. J is returned in the original (unpermuted) beta coordinates,
// which leaves the noncentrality projector unchanged.
struct NullJacobian {
    bool full = false;
    Matrix J;                   // md x (md - q); empty when full
    Eigen::VectorXi permutation;  // column pivot order applied to A
};

inline NullJacobian null_jacobian(const ConstraintSpec& c) {
    NullJacobian res;
    const int q = c.q(), md = c.md();
    if (q == md) {
        res.full = true;
        res.permutation = Eigen::VectorXi::LinSpaced(md, 0, md - 1);
        return res;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(c.A);
    if (qr.rank() < q) throw data_error("constraint matrix is rank deficient");
    const auto P = qr.colsPermutation();
    res.permutation = P.indices();
    const Matrix Ap = c.A * P;
    const Matrix D1 = Ap.leftCols(q);
    const Matrix D2 = Ap.rightCols(md - q);
    Matrix Jp(md, md - q);
    Jp.topRows(q) = -D1.partialPivLu().solve(D2);
    Jp.bottomRows(md - q) = Matrix::Identity(md - q, md - q);
    res.J = P * Jp;  // back to original coordinates
    return res;
}

// Noncentrality of the local chi-square limit of the DELR statistic:
//   delta^2 = eta' { L - L J (J' L J)^{-1} J' L } eta   (q < md)
//   delta^2 = eta' L eta                                (q = md)
inline double noncentrality(const LocalAlternative& alt, const InfoMatrix& U,
                            const ConstraintSpec& c) {
    alt.validate(&c);
    const Vector eta = alt.eta();
    const Matrix& L = U.Lambda;
    const NullJacobian nj = null_jacobian(c);
    double delta2;
    if (nj.full) {
        delta2 = eta.dot(L * eta);
    } else {
        const Matrix JLJ = nj.J.transpose() * L * nj.J;
        Eigen::LLT<Matrix> llt(JLJ);
        if (llt.info() != Eigen::Success)
            throw numeric_error("J' Lambda J is singular");
        const Vector Leta = L * eta;
        delta2 = eta.dot(Leta) -
                 Leta.dot(nj.J * llt.solve(nj.J.transpose() * Leta));
    }
    if (delta2 < -1e-10)
        throw numeric_error("negative noncentrality " + std::to_string(delta2));
    return std::max(delta2, 0.0);
}

// P( chi^2_q(delta^2) >= chi^2_{q, 1-level} )
inline double local_power(double delta2, int q, double level) {
    if (!(level > 0.0 && level < 1.0))
        throw data_error("level must lie in (0,1)");
    const double crit = chi2_quantile(q, 1.0 - level);
    return 1.0 - noncentral_chi2_cdf(q, delta2, crit);
}

struct SampleSizeResult {
    long n_star = 0;
    double power_at_n_star = 0.0;
    double delta2_at_n_star = 0.0;
};

// Smallest total n whose local power reaches the target when the per-sample
// shifts are fixed: c_k(n) = shift_k * sqrt(rho_k n), so delta^2 grows
// linearly in n and the bracket-then-bisect search is monotone.
inline SampleSizeResult sample_size(double target_power, double level,
                                    const std::vector<Vector>& shifts,
                                    const std::vector<double>& rho,
                                    const BaselineSpec& f0,
                                    const std::vector<Vector>& beta_star,
                                    const ConstraintSpec& c,
                                    const BasisFn& basis) {
    if (!(target_power > level && target_power < 1.0))
        throw data_error("target power must lie in (level, 1)");
    const InfoMatrix U = theoretical_information(f0, beta_star, rho, basis);

    auto alternative_at = [&](long n) {
        LocalAlternative alt;
        alt.beta_star = beta_star;
        alt.rho = rho;
        alt.drifts.resize(shifts.size());
        for (std::size_t k = 0; k < shifts.size(); ++k)
            alt.drifts[k] =
                shifts[k] * std::sqrt(rho[k + 1] * static_cast<double>(n));
        return alt;
    };
    auto power_at = [&](long n, double* d2_out = nullptr) {
        const double d2 = noncentrality(alternative_at(n), U, c);
        if (d2_out) *d2_out = d2;
        return local_power(d2, c.q(), level);
    };

    constexpr long kMaxN = 10'000'000;
    long hi = 1;
    while (power_at(hi) < target_power) {
        if (hi >= kMaxN) {
            std::ostringstream os;
            os << "target power unreachable within n <= " << kMaxN
               << " (achieved " << power_at(kMaxN) << ")";
            throw numeric_error(os.str());
        }
        hi = std::min(2 * hi, kMaxN);
    }
    long lo = 0;  // power(0) = level < target
    while (hi - lo > 1) {
        const long mid = lo + (hi - lo) / 2;
        (power_at(mid) < target_power ? lo : hi) = mid;
    }
    SampleSizeResult res;
    res.n_star = hi;
    res.power_at_n_star = power_at(hi, &res.delta2_at_n_star);
    return res;
}

// ---------------------------------------------------------------------------
// Information-pooling design comparison
// ---------------------------------------------------------------------------

// A DELR design: baseline, basis, proportions, null parameters, hypothesis,
// and local drifts. The hypothesis must concern the leading blocks only when
// comparing a subset design to a pooled one.
struct DesignSpec {
    BaselineSpec f0;
    BasisSpec basis;
    std::vector<double> rho;        // m+1
    std::vector<Vector> beta_star;  // m blocks
    ConstraintSpec constraint;
    std::vector<Vector> drifts;     // m blocks

    int m() const { return static_cast<int>(beta_star.size()); }
};

inline double design_noncentrality(const DesignSpec& spec) {
    const BasisFn basis = build_basis(spec.basis);
    const InfoMatrix U =
        theoretical_information(spec.f0, spec.beta_star, spec.rho, basis);
    LocalAlternative alt;
    alt.beta_star = spec.beta_star;
    alt.drifts = spec.drifts;
    alt.rho = spec.rho;
    return noncentrality(alt, U, spec.constraint);
}

struct DesignComparison {
    double delta1_sq = 0.0;  // subset design
    double delta2_sq = 0.0;  // pooled design
    bool pooled_dominates = false;
};

// delta_1^2 from the DRM on samples 0..r, delta_2^2 from all m+1 samples,
// same hypothesis on (beta_1, ..., beta_r). The extra pooled samples carry
// zero drift. Information pooling guarantees delta_2^2 >= delta_1^2.
inline DesignComparison compare_designs(const DesignSpec& subset,
                                        const DesignSpec& pooled) {
    const int r = subset.m();
    if (pooled.m() < r) throw data_error("pooled design must extend the subset design");
    if (subset.f0.family != pooled.f0.family || subset.f0.p1 != pooled.f0.p1 ||
        subset.f0.p2 != pooled.f0.p2)
        throw data_error("designs must share the baseline F0");
    if (!(subset.basis.terms == pooled.basis.terms))
        throw data_error("designs must share the basis");
    if (subset.constraint.A != pooled.constraint.A.leftCols(r * subset.basis.dim()) ||
        pooled.constraint.A.rightCols((pooled.m() - r) * subset.basis.dim())
                .cwiseAbs()
                .maxCoeff() > 0.0 ||
        subset.constraint.b != pooled.constraint.b)
        throw data_error("pooled hypothesis must equal the subset hypothesis on zeta");
    for (int k = 0; k < r; ++k) {
        if (subset.beta_star[k] != pooled.beta_star[k])
            throw data_error("designs must share beta* on the subset populations");
        if (subset.drifts[k] != pooled.drifts[k])
            throw data_error("designs must share the drifts c_1..c_r");
    }
    for (int k = r; k < pooled.m(); ++k)
        if (pooled.drifts[k].lpNorm<Eigen::Infinity>() != 0.0)
            throw data_error("pooled design must carry zero drift beyond the subset");

    DesignComparison res;
    res.delta1_sq = design_noncentrality(subset);
    res.delta2_sq = design_noncentrality(pooled);
    res.pooled_dominates = res.delta2_sq >= res.delta1_sq - 1e-8;
    return res;
}

}  // namespace drmdel

#endif  // DRMDEL_POWER_HPP
