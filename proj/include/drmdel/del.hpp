#ifndef DRMDEL_DEL_HPP
#define DRMDEL_DEL_HPP

#include <cmath>
#include <limits>
#include <optional>

#include "drmdel/model.hpp"

namespace drmdel {

struct FitResult {
    Theta theta_hat;
    double del_value = 0.0;
    double gradient_norm = 0.0;  // infinity norm; projected for constrained fits
    int iterations = 0;
    bool converged = false;
    bool constrained = false;
    std::optional<ConstraintSpec> constraint;
};

struct fit_error : numeric_error {
    fit_error(const std::string& msg, FitResult last)
        : numeric_error(msg), last_iterate(std::move(last)) {}
    FitResult last_iterate;
};

struct FitOptions {
    double gradient_tol = 1e-8;  // scaled by n
    double step_tol = 1e-12;
    int max_iterations = 200;
    double armijo_c1 = 1e-4;
    double backtrack_factor = 0.5;
};

// The dual empirical likelihood
//   l_n(theta) = sum_{k,j} [ -log{ sum_r lam_r exp(a_r + b_r'q(x_kj)) }
//                            + a_k + b_k'q(x_kj) ]
// with lam_r = n_r/n and (a_0, b_0) = 0. The inner log-sum is evaluated with
// a max-shift so the value is finite for any finite theta. Precomputes the
// basis matrix over the pooled observations once.
class DelObjective {
  public:
    DelObjective(const MultiSample& data, const BasisFn& basis)
        : m_(data.m()), d_(basis.dim()), n_(static_cast<int>(data.total())) {
        if (m_ < 1) throw data_error("DEL requires at least two samples");
        Q_.resize(n_, d_);
        owner_.resize(n_);
        counts_.resize(m_ + 1);
        log_lambda_.resize(m_ + 1);
        int row = 0;
        for (int k = 0; k <= m_; ++k) {
            counts_[k] = static_cast<int>(data.size(k));
            log_lambda_[k] =
                std::log(static_cast<double>(counts_[k]) / static_cast<double>(n_));
            Vector q(d_);
            for (double x : data.sample(k)) {
                basis.eval_into(x, q);
                Q_.row(row) = q.transpose();
                owner_[row] = k;
                ++row;
            }
        }
    }

    int m() const { return m_; }
    int d() const { return d_; }
    int n() const { return n_; }
    int dim() const { return m_ * (d_ + 1); }

    double value(const Theta& theta) const {
        check_dims(theta);
        const Matrix expo = exponents(theta);  // n x (m+1), entry log(lam_r phi_r)
        double val = 0.0;
        for (int i = 0; i < n_; ++i) {
            val -= log_sum_row(expo, i);
            const int k = owner_[i];
            if (k > 0) val += theta.alpha[k - 1] + Q_.row(i).dot(theta.beta_block(k - 1, d_));
        }
        return val;
    }

    // Exact gradient and Hessian; see value() for the objective. The Hessian
    // is symmetric negative semidefinite by concavity of the DEL.
    void derivatives(const Theta& theta, Vector& grad, Matrix& hess) const {
        check_dims(theta);
        const int dim_ = dim();
        grad = Vector::Zero(dim_);
        hess = Matrix::Zero(dim_, dim_);

        const Matrix expo = exponents(theta);
        Vector w(m_ + 1);  // lam_r phi_r / s, the softmax over populations
        for (int i = 0; i < n_; ++i) {
            const double lse = log_sum_row(expo, i);
            for (int r = 0; r <= m_; ++r) w[r] = std::exp(expo(i, r) - lse);
            const auto q = Q_.row(i).transpose();
            const int k = owner_[i];

            // gradient: d/d alpha_t = e_t(k) - w_t ; d/d beta_t = same * q
            for (int t = 1; t <= m_; ++t) {
                const double gt = (t == k ? 1.0 : 0.0) - w[t];
                grad[t - 1] += gt;
                grad.segment(m_ + (t - 1) * d_, d_) += gt * q;
            }

            // Hessian blocks: -(diag(w) - w w')_{tu} times {1, q, qq'}
            for (int t = 1; t <= m_; ++t) {
                for (int u = t; u <= m_; ++u) {
                    const double htu = (t == u ? w[t] : 0.0) - w[t] * w[u];
                    hess(t - 1, u - 1) -= htu;
                    hess.block(t - 1, m_ + (u - 1) * d_, 1, d_) -=
                        htu * q.transpose();
                    if (t != u)
                        hess.block(u - 1, m_ + (t - 1) * d_, 1, d_) -=
                            htu * q.transpose();
                    hess.block(m_ + (t - 1) * d_, m_ + (u - 1) * d_, d_, d_) -=
                        htu * (q * q.transpose());
                }
            }
        }
        // mirror to the lower triangle
        hess = hess.selfadjointView<Eigen::Upper>();
    }

  private:
    void check_dims(const Theta& theta) const {
        if (theta.m() != m_ || theta.beta.size() != m_ * d_)
            throw data_error("theta dimensions do not match the model");
    }

    // Row i of the n x (m+1) matrix log(lambda_r) + alpha_r + beta_r'q(x_i).
    Matrix exponents(const Theta& theta) const {
        Matrix e(n_, m_ + 1);
        e.col(0).setConstant(log_lambda_[0]);
        for (int r = 1; r <= m_; ++r) {
            e.col(r) = (Q_ * theta.beta_block(r - 1, d_)).array() +
                       (log_lambda_[r] + theta.alpha[r - 1]);
        }
        return e;
    }

    static double log_sum_row(const Matrix& expo, int i) {
        const double mx = expo.row(i).maxCoeff();
        double s = 0.0;
        for (int r = 0; r < expo.cols(); ++r) s += std::exp(expo(i, r) - mx);
        return mx + std::log(s);
    }

    int m_, d_, n_;
    Matrix Q_;                       // pooled basis values, n x d
    std::vector<int> owner_;         // population index of each pooled row
    std::vector<int> counts_;
    std::vector<double> log_lambda_;
};

inline double del_value(const Theta& theta, const MultiSample& data,
                        const BasisFn& basis) {
    return DelObjective(data, basis).value(theta);
}

inline std::pair<Vector, Matrix> del_derivatives(const Theta& theta,
                                                 const MultiSample& data,
                                                 const BasisFn& basis) {
    Vector g;
    Matrix h;
    DelObjective(data, basis).derivatives(theta, g, h);
    return {std::move(g), std::move(h)};
}

namespace detail {

// Damped Newton ascent with Armijo backtracking on a concave objective.
// `value` and `derivs` act on the free coordinates of the (possibly reduced)
// problem. Returns the maximizer in free coordinates.
template <class ValueFn, class DerivFn>
FitResult maximize_concave(int dim, int n, ValueFn&& value, DerivFn&& derivs,
                           const FitOptions& opts, Vector& x) {
    FitResult res;
    x = Vector::Zero(dim);
    double fx = value(x);
    Vector grad(dim);
    Matrix hess(dim, dim);
    const double gtol = opts.gradient_tol * n;

    for (int iter = 0; iter < opts.max_iterations; ++iter) {
        derivs(x, grad, hess);
        const double gnorm = grad.lpNorm<Eigen::Infinity>();
        res.iterations = iter;
        res.gradient_norm = gnorm;
        if (gnorm <= gtol) {
            res.converged = true;
            res.del_value = fx;
            return res;
        }

        // Newton direction: solve (-H) p = g; -H is positive semidefinite.
        Vector p;
        Eigen::LDLT<Matrix> ldlt(-hess);
        bool use_newton = ldlt.info() == Eigen::Success;
        if (use_newton) {
            p = ldlt.solve(grad);
            if (!p.allFinite() || p.dot(grad) <= 0.0) use_newton = false;
        }
        if (!use_newton) p = grad / std::max(1.0, gnorm);  // gradient ascent fallback

        // Armijo backtracking
        double step = 1.0;
        const double slope = p.dot(grad);
        double fnew = -std::numeric_limits<double>::infinity();
        Vector xnew;
        bool accepted = false;
        // Near the optimum the predicted gain can drop below the rounding
        // noise of the objective; sufficient decrease is then unmeasurable,
        // so take the raw Newton step and let the gradient test decide.
        const double noise = 64.0 * std::numeric_limits<double>::epsilon() *
                             (std::abs(fx) + 1.0);
        if (std::abs(slope) <= noise) {
            xnew = x + p;
            fnew = value(xnew);
            if (std::isfinite(fnew)) {
                accepted = true;
                if (fnew < fx) fnew = fx;  // never report a worse value
            }
        }
        for (int bt = 0; !accepted && bt < 60; ++bt) {
            xnew = x + step * p;
            fnew = value(xnew);
            if (std::isfinite(fnew) && fnew >= fx + opts.armijo_c1 * step * slope) {
                accepted = true;
                break;
            }
            step *= opts.backtrack_factor;
        }
        if (!accepted) {
            res.del_value = fx;
            res.gradient_norm = gnorm;
            throw fit_error("line search stalled (gradient norm " +
                                std::to_string(gnorm) + ")",
                            res);
        }
        const double step_norm = (xnew - x).norm();
        x = std::move(xnew);
        fx = fnew;
        if (step_norm <= opts.step_tol) {
            derivs(x, grad, hess);
            res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
            res.converged = res.gradient_norm <= gtol;
            res.del_value = fx;
            res.iterations = iter + 1;
            if (!res.converged)
                throw fit_error("step size collapsed before reaching the gradient "
                                "tolerance (gradient norm " +
                                    std::to_string(res.gradient_norm) + ")",
                                res);
            return res;
        }
    }
    derivs(x, grad, hess);
    res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    res.del_value = fx;
    res.iterations = opts.max_iterations;
    throw fit_error("no convergence after " + std::to_string(opts.max_iterations) +
                        " iterations (gradient norm " +
                        std::to_string(res.gradient_norm) + ")",
                    res);
}

}  // namespace detail

// Unconstrained MELE: theta_hat = argmax l_n(theta), Newton from theta = 0.
inline FitResult fit_mele(const MultiSample& data, const BasisFn& basis,
                          const FitOptions& opts = {}) {
    DelObjective obj(data, basis);
    const int m = obj.m(), d = obj.d();
    Vector x;
    FitResult res = detail::maximize_concave(
        obj.dim(), obj.n(),
        [&](const Vector& t) { return obj.value(Theta::unflatten(t, m, d)); },
        [&](const Vector& t, Vector& g, Matrix& h) {
            obj.derivatives(Theta::unflatten(t, m, d), g, h);
        },
        opts, x);
    res.theta_hat = Theta::unflatten(x, m, d);
    return res;
}

namespace detail {

// Null-space reparameterization of { beta : A beta = b }: beta = beta_p + N g
// with beta_p the minimum-norm particular solution and N an orthonormal basis
// of null(A). Every iterate is exactly feasible and the reduced problem stays
// concave.
struct NullSpaceParam {
    Vector beta_p;
    Matrix N;  // md x (md - q); empty when q = md

    explicit NullSpaceParam(const ConstraintSpec& c) {
        Eigen::JacobiSVD<Matrix> svd(c.A, Eigen::ComputeThinU | Eigen::ComputeFullV);
        beta_p = svd.solve(c.b);
        const int md = c.md(), q = c.q();
        N = svd.matrixV().rightCols(md - q);
    }
};

}  // namespace detail

// Constrained MELE over { theta : A beta = b }; alpha remains free.
inline FitResult fit_constrained(const MultiSample& data, const BasisFn& basis,
                                 const ConstraintSpec& c,
                                 const FitOptions& opts = {}) {
    DelObjective obj(data, basis);
    const int m = obj.m(), d = obj.d(), md = m * d;
    if (c.md() != md)
        throw data_error("constraint dimension does not match m*d of the model");

    detail::NullSpaceParam param(c);
    const int free_beta = md - c.q();
    const int dim = m + free_beta;

    auto expand = [&](const Vector& z) {
        Theta t(z.head(m), param.beta_p);
        if (free_beta > 0) t.beta += param.N * z.tail(free_beta);
        return t;
    };

    Vector x;
    FitResult res = detail::maximize_concave(
        dim, obj.n(), [&](const Vector& z) { return obj.value(expand(z)); },
        [&](const Vector& z, Vector& g, Matrix& h) {
            Vector gf;
            Matrix hf;
            obj.derivatives(expand(z), gf, hf);
            // chain rule through (alpha, gamma) -> (alpha, beta_p + N gamma)
            g.resize(dim);
            h.resize(dim, dim);
            g.head(m) = gf.head(m);
            h.topLeftCorner(m, m) = hf.topLeftCorner(m, m);
            if (free_beta > 0) {
                g.tail(free_beta) = param.N.transpose() * gf.tail(md);
                h.topRightCorner(m, free_beta) = hf.topRightCorner(m, md) * param.N;
                h.bottomLeftCorner(free_beta, m) =
                    h.topRightCorner(m, free_beta).transpose();
                h.bottomRightCorner(free_beta, free_beta) =
                    param.N.transpose() * hf.bottomRightCorner(md, md) * param.N;
            }
        },
        opts, x);
    res.theta_hat = expand(x);
    res.constrained = true;
    res.constraint = c;
    return res;
}

}  // namespace drmdel

#endif  // DRMDEL_DEL_HPP
