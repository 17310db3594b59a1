// SPDX-License-Identifier: Apache-2.0
//
// Thin-wire dipole impedance model: self-impedance from the sinusoidal
// current distribution, mutual impedance between arbitrarily oriented
// elements by the induced-EMF double integral, and assembly of the full
// transmit impedance matrix.

#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "rca/geometry.hpp"
#include "rca/numerics.hpp"

namespace rca::em {

using geom::AxisMatrix;
using geom::ElementGeometry;
using geom::Vec3;

struct WireParameters {
    double wavenumber = 0.0;     // k = 2 pi / lambda
    double dipole_length = 0.0;  // D
    double dipole_radius = 0.0;  // a
    double wave_impedance = 0.0; // eta
};

inline void validate(const WireParameters& wp) {
    if (!(wp.wavenumber > 0.0)) throw std::domain_error("WireParameters: wavenumber must be positive");
    if (!(wp.dipole_length > 0.0) || !(wp.dipole_radius > 0.0) ||
        !(wp.dipole_radius < wp.dipole_length / 10.0)) {
        throw std::domain_error("WireParameters: need 0 < radius < length/10");
    }
    if (!(wp.wave_impedance > 0.0)) throw std::domain_error("WireParameters: wave impedance must be positive");
}

namespace detail {

inline double feed_current_denominator(const WireParameters& wp) {
    const double denom = std::sin(0.5 * wp.wavenumber * wp.dipole_length);
    if (std::abs(denom) < 1e-12) {
        throw std::domain_error(
            "thin-wire model: dipole length is an integer number of wavelengths; "
            "the sinusoidal feed-normalized current distribution is singular");
    }
    return denom;
}

// Shared Gauss-Legendre rules; map nodes are never mutated after creation.
inline const numerics::QuadratureRule& shared_rule(int order) {
    static std::mutex guard;
    static std::map<int, numerics::QuadratureRule> rules;
    std::scoped_lock lock(guard);
    auto it = rules.find(order);
    if (it == rules.end()) {
        it = rules.emplace(order, numerics::gauss_legendre(order)).first;
    }
    return it->second;
}

} // namespace detail

// Self-impedance of the center-fed thin-wire dipole (independent of rotation).
inline std::complex<double> self_impedance(const WireParameters& wp) {
    validate(wp);
    detail::feed_current_denominator(wp);
    const double k = wp.wavenumber;
    const double length = wp.dipole_length;
    const double eta = wp.wave_impedance;
    const double kd = k * length;
    const double c = numerics::kEulerMascheroni;
    using numerics::cosine_integral;
    using numerics::sine_integral;

    const double si_kd = sine_integral(kd);
    const double si_2kd = sine_integral(2.0 * kd);
    const double ci_kd = cosine_integral(kd);
    const double ci_2kd = cosine_integral(2.0 * kd);
    const double ci_rad = cosine_integral(2.0 * k * wp.dipole_radius * wp.dipole_radius / length);

    const double real_part =
        eta / (2.0 * numerics::kPi) *
        (c + std::log(kd) - ci_kd + 0.5 * std::sin(kd) * (si_2kd - 2.0 * si_kd) +
         0.5 * std::cos(kd) * (c + std::log(0.5 * kd) + ci_2kd - 2.0 * ci_kd));
    const double imag_part =
        eta / (4.0 * numerics::kPi) *
        (2.0 * si_kd + std::cos(kd) * (2.0 * si_kd - si_2kd) -
         std::sin(kd) * (2.0 * ci_kd - ci_2kd - ci_rad));
    return {real_part, imag_part};
}

// Feed-normalized sinusoidal current and its axial derivative. The slope at
// the center is reported as zero; its value there does not affect integrals.
struct CurrentSample {
    double current = 0.0; // dimensionless
    double slope = 0.0;   // 1/m
};

inline CurrentSample current_profile(double s, const WireParameters& wp) {
    validate(wp);
    const double half = 0.5 * wp.dipole_length;
    if (std::abs(s) > half) {
        throw std::domain_error("current_profile: axial coordinate beyond the dipole tip");
    }
    const double denom = detail::feed_current_denominator(wp);
    const double k = wp.wavenumber;
    CurrentSample out;
    out.current = std::sin(k * (half - std::abs(s))) / denom;
    if (s != 0.0) {
        const double sgn = s > 0.0 ? 1.0 : -1.0;
        out.slope = -k * sgn * std::cos(k * (half - std::abs(s))) / denom;
    }
    return out;
}

namespace detail {

// Nodes, weights, and current samples for one half of the dipole; splitting
// at the center kink keeps every quadrant integrand smooth.
struct HalfAxisSamples {
    std::vector<double> position;
    std::vector<double> weight;
    std::vector<double> current;
    std::vector<double> slope;
};

inline std::array<HalfAxisSamples, 2> half_axis_samples(const WireParameters& wp, int order) {
    const auto& rule = shared_rule(order);
    const double half = 0.5 * wp.dipole_length;
    const double k = wp.wavenumber;
    const double denom = feed_current_denominator(wp);
    std::array<HalfAxisSamples, 2> out;
    const double bounds[2][2] = {{-half, 0.0}, {0.0, half}};
    for (int side = 0; side < 2; ++side) {
        auto& samples = out[side];
        const double mid = 0.5 * (bounds[side][0] + bounds[side][1]);
        const double hw = 0.5 * (bounds[side][1] - bounds[side][0]);
        samples.position.resize(order);
        samples.weight.resize(order);
        samples.current.resize(order);
        samples.slope.resize(order);
        const double sgn = side == 0 ? -1.0 : 1.0;
        for (int p = 0; p < order; ++p) {
            const double s = mid + hw * rule.nodes[p];
            samples.position[p] = s;
            samples.weight[p] = hw * rule.weights[p];
            samples.current[p] = std::sin(k * (half - std::abs(s))) / denom;
            samples.slope[p] = -k * sgn * std::cos(k * (half - std::abs(s))) / denom;
        }
    }
    return out;
}

inline std::complex<double> mutual_impedance_integral(
    const Vec3& center_i, const Vec3& axis_i, const Vec3& center_j, const Vec3& axis_j,
    const WireParameters& wp, int order) {
    const auto samples = half_axis_samples(wp, order);
    const double k = wp.wavenumber;
    const double k2 = k * k;
    const double dot = axis_i.dot(axis_j);
    const Vec3 dp = center_i - center_j;
    double acc_re = 0.0;
    double acc_im = 0.0;
    for (const auto& s_half : samples) {
        for (const auto& t_half : samples) {
            const int n = static_cast<int>(s_half.position.size());
            for (int p = 0; p < n; ++p) {
                const Vec3 base = dp + s_half.position[p] * axis_i;
                const double w_cur = s_half.weight[p] * k2 * s_half.current[p] * dot;
                const double w_slope = s_half.weight[p] * s_half.slope[p];
                for (int q = 0; q < n; ++q) {
                    const Vec3 r = base - t_half.position[q] * axis_j;
                    const double dist = r.norm();
                    const double amp =
                        (w_cur * t_half.current[q] - w_slope * t_half.slope[q]) *
                        t_half.weight[q] / dist;
                    const double phase = -k * dist;
                    acc_re += amp * std::cos(phase);
                    acc_im += amp * std::sin(phase);
                }
            }
        }
    }
    // j eta / (4 pi k) prefactor.
    const double scale = wp.wave_impedance / (4.0 * numerics::kPi * k);
    return {-scale * acc_im, scale * acc_re};
}

} // namespace detail

inline constexpr int kDefaultQuadratureOrder = 32;

// Induced-EMF mutual impedance between two thin-wire elements with arbitrary
// relative orientation. `order` is the Gauss node count per dimension on each
// of the four center-split quadrants.
inline std::complex<double> mutual_impedance(const Vec3& center_i, const Vec3& axis_i,
                                             const Vec3& center_j, const Vec3& axis_j,
                                             const WireParameters& wp,
                                             int order = kDefaultQuadratureOrder) {
    validate(wp);
    const double clearance = 2.0 * wp.dipole_radius;
    const double dist = geom::segment_pair_min_distance(center_i, axis_i, center_j, axis_j,
                                                        0.5 * wp.dipole_length);
    if (dist < clearance) {
        throw std::domain_error("mutual_impedance: elements closer than one antenna diameter");
    }
    return detail::mutual_impedance_integral(center_i, axis_i, center_j, axis_j, wp, order);
}

inline std::complex<double> mutual_impedance(int i, int j, const AxisMatrix& axes,
                                             const ElementGeometry& geom,
                                             const WireParameters& wp,
                                             int order = kDefaultQuadratureOrder) {
    if (i == j) {
        throw std::domain_error("mutual_impedance: use self_impedance for identical elements");
    }
    if (i < 0 || j < 0 || i >= geom.num_elements() || j >= geom.num_elements()) {
        throw std::domain_error("mutual_impedance: element index out of range");
    }
    return mutual_impedance(geom.centers[i], geom.axis_of(i, axes),
                            geom.centers[j], geom.axis_of(j, axes), wp, order);
}

// Memoized off-diagonal entries keyed by unordered element pair and the exact
// axis bit patterns; single-column trial rotations then only recompute the
// entries touching that column. A cache instance is tied to one fixed
// geometry and quadrature order; do not share it across scenarios.
class ImpedanceCache {
public:
    struct Key {
        int i = 0;
        int j = 0;
        std::array<std::uint64_t, 6> axis_bits{};
        bool operator==(const Key&) const = default;
    };

    struct KeyHash {
        std::size_t operator()(const Key& key) const {
            std::uint64_t h = 0x9e3779b97f4a7c15ull ^ (static_cast<std::uint64_t>(key.i) << 32 |
                                                       static_cast<std::uint32_t>(key.j));
            for (const auto bits : key.axis_bits) {
                h ^= bits + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            }
            return static_cast<std::size_t>(h);
        }
    };

    static Key make_key(int i, int j, const Vec3& axis_i, const Vec3& axis_j) {
        Key key;
        const Vec3* first = &axis_i;
        const Vec3* second = &axis_j;
        key.i = i;
        key.j = j;
        if (key.i > key.j) {
            std::swap(key.i, key.j);
            std::swap(first, second);
        }
        for (int c = 0; c < 3; ++c) {
            std::memcpy(&key.axis_bits[c], &(*first)[c], sizeof(double));
            std::memcpy(&key.axis_bits[3 + c], &(*second)[c], sizeof(double));
        }
        return key;
    }

    const std::complex<double>* find(const Key& key) const {
        const auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void store(const Key& key, std::complex<double> value) { entries_.emplace(key, value); }

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    std::unordered_map<Key, std::complex<double>, KeyHash> entries_;
};

// Transmit impedance matrix with its block views.
struct ImpedanceMatrix {
    Eigen::MatrixXcd entries;

    int num_couplers() const { return static_cast<int>(entries.rows()) - 1; }
    std::complex<double> self_term() const { return entries(0, 0); }
    // Active-to-coupler mutual impedances (column under the self term).
    Eigen::VectorXcd active_to_coupler() const {
        return entries.col(0).tail(num_couplers());
    }
    // Coupler-to-coupler block.
    Eigen::MatrixXcd coupler_block() const {
        const int n = num_couplers();
        return entries.bottomRightCorner(n, n);
    }
};

// Assembles the (N+1)x(N+1) transmit impedance matrix. Off-diagonal entries
// are computed once per unordered pair and mirrored (the induced-EMF kernel is
// reciprocal); the optional cache persists entries across calls.
inline ImpedanceMatrix assemble_impedance_matrix(const AxisMatrix& axes,
                                                 const ElementGeometry& geometry,
                                                 const WireParameters& wp,
                                                 int order = kDefaultQuadratureOrder,
                                                 ImpedanceCache* cache = nullptr) {
    if (axes.cols() != geometry.num_couplers()) {
        throw std::invalid_argument("assemble_impedance_matrix: axis count mismatch");
    }
    const int m = geometry.num_elements();
    ImpedanceMatrix out;
    out.entries.resize(m, m);
    const std::complex<double> zs = self_impedance(wp);
    out.entries.diagonal().setConstant(zs);
    for (int i = 0; i < m; ++i) {
        const Vec3 axis_i = geometry.axis_of(i, axes);
        for (int j = i + 1; j < m; ++j) {
            const Vec3 axis_j = geometry.axis_of(j, axes);
            std::complex<double> z;
            if (cache != nullptr) {
                const auto key = ImpedanceCache::make_key(i, j, axis_i, axis_j);
                if (const auto* hit = cache->find(key)) {
                    z = *hit;
                } else {
                    z = mutual_impedance(i, j, axes, geometry, wp, order);
                    cache->store(key, z);
                }
            } else {
                z = mutual_impedance(i, j, axes, geometry, wp, order);
            }
            out.entries(i, j) = z;
            out.entries(j, i) = z;
        }
    }
    return out;
}

// One-time convergence certificate: largest relative change of any
// off-diagonal entry when the per-quadrant node count is doubled.
struct QuadratureCertificate {
    int order = 0;
    double max_relative_change = 0.0;
    bool converged(double tol = 1e-6) const { return max_relative_change < tol; }
};

inline QuadratureCertificate certify_quadrature(const AxisMatrix& axes,
                                                const ElementGeometry& geometry,
                                                const WireParameters& wp,
                                                int order = kDefaultQuadratureOrder) {
    QuadratureCertificate cert;
    cert.order = order;
    const int m = geometry.num_elements();
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            const auto coarse = mutual_impedance(i, j, axes, geometry, wp, order);
            const auto fine = mutual_impedance(i, j, axes, geometry, wp, 2 * order);
            const double rel = std::abs(coarse - fine) / std::abs(fine);
            cert.max_relative_change = std::max(cert.max_relative_change, rel);
        }
    }
    return cert;
}

} // namespace rca::em
