// SPDX-License-Identifier: Apache-2.0
//
// Far-field multipath channel of the coupler-aided transmitter: path
// directions, fixed-center steering vectors, orientation-dependent thin-wire
// element responses with full-sphere pattern normalization, and the effective
// channel vector.

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rca/em_coupling.hpp"
#include "rca/geometry.hpp"
#include "rca/numerics.hpp"

namespace rca::channel {

using em::WireParameters;
using geom::AxisMatrix;
using geom::ElementGeometry;
using geom::Vec3;

struct PathSpec {
    double zenith = 0.0;  // psi in [0, pi]
    double azimuth = 0.0; // phi in [-pi, pi]
    std::complex<double> gain{0.0, 0.0};
};

struct ChannelRealization {
    std::vector<PathSpec> paths;

    int num_paths() const { return static_cast<int>(paths.size()); }
    Eigen::VectorXcd gains() const {
        Eigen::VectorXcd g(paths.size());
        for (std::size_t l = 0; l < paths.size(); ++l) g(l) = paths[l].gain;
        return g;
    }
};

inline Vec3 path_direction(double zenith, double azimuth) {
    if (!(zenith >= 0.0 && zenith <= numerics::kPi)) {
        throw std::domain_error("path_direction: zenith outside [0, pi]");
    }
    if (!(azimuth >= -numerics::kPi && azimuth <= numerics::kPi)) {
        throw std::domain_error("path_direction: azimuth outside [-pi, pi]");
    }
    const double sz = std::sin(zenith);
    return Vec3(sz * std::cos(azimuth), sz * std::sin(azimuth), std::cos(zenith));
}

// Phase profile of the fixed element centers along one departure direction;
// independent of every coupler rotation.
inline Eigen::VectorXcd steering_vector(const PathSpec& path, const ElementGeometry& geometry,
                                        const WireParameters& wp) {
    const Vec3 dir = path_direction(path.zenith, path.azimuth);
    const int m = geometry.num_elements();
    Eigen::VectorXcd steer(m);
    for (int i = 0; i < m; ++i) {
        const double phase = wp.wavenumber * dir.dot(geometry.centers[i]);
        steer(i) = std::complex<double>(std::cos(phase), std::sin(phase));
    }
    return steer;
}

// Unnormalized thin-wire field response along direction f for axis u.
// Continuously extended to zero along the element axis.
inline double dipole_element_response(const Vec3& axis, const Vec3& direction,
                                      const WireParameters& wp) {
    constexpr double kAxialSingularity = 1e-12;
    const double cosine = axis.dot(direction);
    const double perp_sq = 1.0 - cosine * cosine;
    if (perp_sq < kAxialSingularity) return 0.0;
    const double half_kd = 0.5 * wp.wavenumber * wp.dipole_length;
    return (std::cos(half_kd * cosine) - std::cos(half_kd)) / std::sqrt(perp_sq);
}

struct PatternNormalization {
    double c_dip = 0.0;
};

// Full-sphere power normalization of the thin-wire pattern. The integrand is
// azimuthally symmetric about the element axis, so the 2D angular integral
// reduces to a single zenith integral; the result is rotation-independent.
inline PatternNormalization pattern_normalization(const WireParameters& wp,
                                                  int quad_order = 96) {
    em::validate(wp);
    const Vec3 axis(0.0, 0.0, 1.0);
    auto integrand = [&](double zeta) {
        const Vec3 dir(std::sin(zeta), 0.0, std::cos(zeta));
        const double e = dipole_element_response(axis, dir, wp);
        return e * e * std::sin(zeta);
    };
    const auto& coarse = em::detail::shared_rule(quad_order);
    const auto& fine = em::detail::shared_rule(2 * quad_order);
    const double coarse_val = numerics::integrate(coarse, integrand, 0.0, numerics::kPi);
    const double fine_val = numerics::integrate(fine, integrand, 0.0, numerics::kPi);
    if (std::abs(coarse_val - fine_val) > 1e-8 * std::abs(fine_val)) {
        throw std::runtime_error("pattern_normalization: zenith quadrature did not converge");
    }
    if (!(fine_val > 0.0)) {
        throw std::runtime_error("pattern_normalization: non-positive pattern power");
    }
    return PatternNormalization{1.0 / std::sqrt(0.5 * fine_val)};
}

// Effective multipath channel vector h(U): per path, the fixed steering
// profile weighted by the normalized element responses (active element
// response is 1), scaled by sqrt(eta/pi), then summed against path gains.
inline Eigen::VectorXcd effective_channel(const AxisMatrix& axes, const ChannelRealization& ch,
                                          const ElementGeometry& geometry,
                                          const WireParameters& wp,
                                          const PatternNormalization& norm) {
    if (axes.cols() != geometry.num_couplers()) {
        throw std::invalid_argument("effective_channel: axis count does not match geometry");
    }
    if (ch.paths.empty()) {
        throw std::invalid_argument("effective_channel: at least one path required");
    }
    const int m = geometry.num_elements();
    const double element_scale = std::sqrt(wp.wave_impedance / numerics::kPi);
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(m);
    for (const auto& path : ch.paths) {
        const Vec3 dir = path_direction(path.zenith, path.azimuth);
        for (int i = 0; i < m; ++i) {
            const double phase = wp.wavenumber * dir.dot(geometry.centers[i]);
            const std::complex<double> steer(std::cos(phase), std::sin(phase));
            const double response =
                i == 0 ? 1.0 : norm.c_dip * dipole_element_response(axes.col(i - 1), dir, wp);
            h(i) += path.gain * steer * (element_scale * response);
        }
    }
    return h;
}

} // namespace rca::channel
