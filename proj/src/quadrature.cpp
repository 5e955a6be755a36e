#include "dsdg/quadrature.hpp"

#include <cmath>
#include <numbers>

namespace dsdg {

LineRule gauss_legendre(std::size_t n) {
    LineRule rule;
    rule.points.resize(n);
    rule.weights.resize(n);
    rule.degree = 2 * n - 1;
    for (std::size_t i = 0; i < n; ++i) {
        // Newton iteration on P_n from the Chebyshev-like initial guess
        long double x = std::cos(std::numbers::pi_v<long double> * (static_cast<long double>(i) + 0.75L) /
                                 (static_cast<long double>(n) + 0.5L));
        long double dp = 0.0L;
        for (int iter = 0; iter < 100; ++iter) {
            long double p0 = 1.0L, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const long double p2 = ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / static_cast<long double>(k);
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p1 = x;
                p0 = 1.0L;
            }
            dp = static_cast<long double>(n) * (x * p1 - p0) / (x * x - 1.0L);
            const long double dx = p1 / dp;
            x -= dx;
            if (std::fabs(dx) < 1e-19L) break;
        }
        long double p0 = 1.0L, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const long double p2 = ((2.0L * k - 1.0L) * x * p1 - (k - 1.0L) * p0) / static_cast<long double>(k);
            p0 = p1;
            p1 = p2;
        }
        dp = static_cast<long double>(n) * (x * p1 - p0) / (x * x - 1.0L);
        const long double w = 2.0L / ((1.0L - x * x) * dp * dp);
        // map [-1, 1] → [0, 1], ascending order
        rule.points[n - 1 - i] = static_cast<double>(0.5L * (x + 1.0L));
        rule.weights[n - 1 - i] = static_cast<double>(0.5L * w);
    }
    return rule;
}

LineRule line_rule(std::size_t degree) { return gauss_legendre(degree / 2 + 1); }

QuadratureRule triangle_rule(std::size_t degree) {
    // ∫_T f = ∫_0^1 ∫_0^1 f(u, v (1 - u)) (1 - u) dv du; the u-integrand has degree + 1
    const LineRule ru = line_rule(degree + 1);
    const LineRule rv = line_rule(degree);
    QuadratureRule rule;
    rule.degree = degree;
    for (std::size_t a = 0; a < ru.points.size(); ++a) {
        const double u = ru.points[a];
        for (std::size_t b = 0; b < rv.points.size(); ++b) {
            const double v = rv.points[b];
            rule.points.push_back({u, v * (1.0 - u)});
            rule.weights.push_back(ru.weights[a] * rv.weights[b] * (1.0 - u));
        }
    }
    return rule;
}

}  // namespace dsdg
