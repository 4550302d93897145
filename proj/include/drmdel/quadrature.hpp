#ifndef DRMDEL_QUADRATURE_HPP
#define DRMDEL_QUADRATURE_HPP

#include <cmath>
#include <functional>

#include "drmdel/model.hpp"

namespace drmdel {
namespace quad {

// 15-point Gauss-Kronrod nodes/weights on [-1, 1] with the embedded 7-point
// Gauss rule for the error estimate.
namespace detail {

inline constexpr double kXgk[8] = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
inline constexpr double kWgk[8] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr double kWg[4] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

// One GK15 panel for a vector-valued integrand.
template <class F>
void panel(const F& f, double a, double b, Vector& result, double& err) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    Vector fc = f(c);
    Vector resk = kWgk[7] * fc;
    Vector resg = kWg[3] * fc;
    for (int j = 0; j < 7; ++j) {
        const double dx = h * kXgk[j];
        Vector fsum = f(c - dx) + f(c + dx);
        resk += kWgk[j] * fsum;
        if (j % 2 == 1) resg += kWg[j / 2] * fsum;
    }
    result = resk * h;
    err = ((resk - resg) * h).template lpNorm<Eigen::Infinity>();
}

template <class F>
void adapt(const F& f, double a, double b, double tol, int depth, long& budget,
           Vector& out) {
    if (--budget < 0)
        throw numeric_error(
            "quadrature panel budget exhausted (divergent or highly singular "
            "integrand?)");
    Vector r;
    double err;
    panel(f, a, b, r, err);
    if (err <= tol || depth >= 48) {
        out += r;
        return;
    }
    const double mid = 0.5 * (a + b);
    adapt(f, a, mid, tol / 2.0, depth + 1, budget, out);
    adapt(f, mid, b, tol / 2.0, depth + 1, budget, out);
}

}  // namespace detail

// Adaptive Gauss-Kronrod on a finite interval; absolute tolerance per entry.
template <class F>
Vector integrate(const F& f, double a, double b, double abs_tol = 1e-10) {
    Vector probe = f(0.5 * (a + b));
    Vector out = Vector::Zero(probe.size());
    long budget = 200000;  // panels; far beyond any convergent integrand here
    detail::adapt(f, a, b, abs_tol, 0, budget, out);
    if (!out.allFinite())
        throw numeric_error("quadrature produced a non-finite result (divergent integrand?)");
    return out;
}

inline double integrate_scalar(const std::function<double(double)>& f, double a,
                               double b, double abs_tol = 1e-10) {
    auto vf = [&](double x) { return Vector::Constant(1, f(x)); };
    return integrate(vf, a, b, abs_tol)[0];
}

// Half line (lo, inf) via x = lo + t/(1-t), t in (0,1).
template <class F>
Vector integrate_halfline(const F& f, double lo, double abs_tol = 1e-10) {
    auto g = [&](double t) -> Vector {
        const double om = 1.0 - t;
        const double x = lo + t / om;
        return f(x) * (1.0 / (om * om));
    };
    return integrate(g, 1e-14, 1.0 - 1e-14, abs_tol);
}

// Whole real line via x = t/(1-t^2), t in (-1,1).
template <class F>
Vector integrate_realline(const F& f, double abs_tol = 1e-10) {
    auto g = [&](double t) -> Vector {
        const double om = 1.0 - t * t;
        const double x = t / om;
        return f(x) * ((1.0 + t * t) / (om * om));
    };
    return integrate(g, -1.0 + 1e-14, 1.0 - 1e-14, abs_tol);
}

}  // namespace quad
}  // namespace drmdel

#endif  // DRMDEL_QUADRATURE_HPP
