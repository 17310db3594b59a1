// SPDX-License-Identifier: Apache-2.0
//
// rca-sim: rotatable coupler antenna simulation library
//
// Special functions (sine/cosine integrals) and Gauss-Legendre quadrature
// used by the electromagnetic and channel models.

#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace rca::numerics {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kEulerMascheroni = 0.57721566490153286061;

namespace detail {

// Auxiliary functions for the trigonometric integrals:
//   Si(x) = pi/2 - f(x) cos x - g(x) sin x
//   Ci(x) =        f(x) sin x - g(x) cos x
// with f(x) + i g(x) = i e^{ix} E1(ix), evaluated by the modified Lentz
// continued fraction for E1. Converges to machine precision for x >= ~2;
// we switch branches at x = 4.
inline std::complex<double> trig_integral_aux(double x) {
    std::complex<double> b(1.0, x);
    std::complex<double> c(1.0 / 1e-300, 0.0);
    std::complex<double> d = 1.0 / b;
    std::complex<double> h = d;
    for (int k = 1; k <= 200; ++k) {
        const double a = -static_cast<double>(k) * static_cast<double>(k);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        const std::complex<double> delta = c * d;
        h *= delta;
        if (std::abs(delta.real() - 1.0) + std::abs(delta.imag()) < 1e-16) {
            return std::complex<double>(0.0, 1.0) * h;
        }
    }
    throw std::runtime_error("trig_integral_aux: continued fraction did not converge");
}

} // namespace detail

// Si(x) = int_0^x sin(t)/t dt. Odd extension for negative arguments.
inline double sine_integral(double x) {
    if (!std::isfinite(x)) {
        throw std::domain_error("sine_integral: argument must be finite");
    }
    if (x < 0.0) {
        return -sine_integral(-x);
    }
    if (x < 4.0) {
        // Si(x) = sum_{n>=0} (-1)^n x^{2n+1} / ((2n+1)(2n+1)!)
        const double x2 = x * x;
        double power_term = x; // x^{2n+1} / (2n+1)!
        double sum = x;        // n = 0 contribution
        for (int n = 1; n <= 60; ++n) {
            const double m = 2.0 * n;
            power_term *= -x2 / (m * (m + 1.0));
            const double contrib = power_term / (m + 1.0);
            sum += contrib;
            if (std::abs(contrib) < 1e-18) break;
        }
        return sum;
    }
    const std::complex<double> fg = detail::trig_integral_aux(x);
    return 0.5 * kPi - fg.real() * std::cos(x) - fg.imag() * std::sin(x);
}

// Ci(x) = -int_x^inf cos(t)/t dt, x > 0. Logarithmically singular at 0.
inline double cosine_integral(double x) {
    if (!std::isfinite(x) || x <= 0.0) {
        throw std::domain_error("cosine_integral: argument must be positive and finite");
    }
    if (x < 4.0) {
        // Ci(x) = C + ln x + sum_{n>=1} (-1)^n x^{2n} / ((2n)(2n)!)
        const double x2 = x * x;
        double power_term = 1.0; // x^{2n} / (2n)!
        double sum = 0.0;
        for (int n = 1; n <= 60; ++n) {
            const double m = 2.0 * n;
            power_term *= -x2 / ((m - 1.0) * m);
            const double contrib = power_term / m;
            sum += contrib;
            if (std::abs(contrib) < 1e-18) break;
        }
        return kEulerMascheroni + std::log(x) + sum;
    }
    const std::complex<double> fg = detail::trig_integral_aux(x);
    return fg.real() * std::sin(x) - fg.imag() * std::cos(x);
}

// Gauss-Legendre rule on [-1, 1]; exact for polynomials of degree 2*order-1.
struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    int order = 0;
};

inline QuadratureRule gauss_legendre(int order) {
    if (order < 1 || order > 1024) {
        throw std::domain_error("gauss_legendre: order must be in [1, 1024]");
    }
    QuadratureRule rule;
    rule.order = order;
    rule.nodes.resize(order);
    rule.weights.resize(order);
    const int half = (order + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Newton iteration on P_order from the standard initial guess.
        double z = std::cos(kPi * (i + 0.75) / (order + 0.5));
        double pp = 0.0;
        for (int iter = 0;; ++iter) {
            double p1 = 1.0;
            double p2 = 0.0;
            for (int j = 0; j < order; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = ((2.0 * j + 1.0) * z * p2 - j * p3) / (j + 1.0);
            }
            pp = order * (z * p1 - p2) / (z * z - 1.0);
            const double z_prev = z;
            z = z_prev - p1 / pp;
            if (std::abs(z - z_prev) < 1e-15) break;
            if (iter > 100) {
                throw std::runtime_error("gauss_legendre: Newton iteration stalled");
            }
        }
        rule.nodes[i] = -z;
        rule.nodes[order - 1 - i] = z;
        rule.weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        rule.weights[order - 1 - i] = rule.weights[i];
    }
    return rule;
}

// Applies a rule to f over [a, b].
template <class F>
double integrate(const QuadratureRule& rule, F&& f, double a, double b) {
    const double mid = 0.5 * (a + b);
    const double half_width = 0.5 * (b - a);
    double sum = 0.0;
    for (int i = 0; i < rule.order; ++i) {
        sum += rule.weights[i] * f(mid + half_width * rule.nodes[i]);
    }
    return half_width * sum;
}

} // namespace rca::numerics
