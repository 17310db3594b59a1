// SPDX-License-Identifier: Apache-2.0
//
// Rotation-axis parameterization, spherical-cap feasible set with its
// retraction, tangent bases, and segment-segment non-intersection checks.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rca/numerics.hpp"

namespace rca::geom {

using Vec3 = Eigen::Vector3d;

// Columns are the unit rotation axes of the couplers (3 x N).
using AxisMatrix = Eigen::Matrix3Xd;

// Unit axis from zenith/azimuth angles measured against the global frame.
inline Vec3 axis_from_angles(double theta_z, double theta_a) {
    if (!(theta_z >= 0.0 && theta_z <= numerics::kPi)) {
        throw std::domain_error("axis_from_angles: zenith angle outside [0, pi]");
    }
    if (!(theta_a >= -numerics::kPi && theta_a < numerics::kPi)) {
        throw std::domain_error("axis_from_angles: azimuth angle outside [-pi, pi)");
    }
    const double sz = std::sin(theta_z);
    return Vec3(sz * std::cos(theta_a), sz * std::sin(theta_a), std::cos(theta_z));
}

// Set of unit vectors within angle theta_max of the reference axis.
struct SphericalCap {
    double theta_max = numerics::kPi;
    double c_theta = -1.0; // cos(theta_max)
    double s_theta = 0.0;  // sin(theta_max)
    Vec3 axis{0.0, 0.0, 1.0};
    Vec3 b_perp{1.0, 0.0, 0.0}; // fixed unit vector orthogonal to axis

    SphericalCap() : SphericalCap(numerics::kPi) {}
    explicit SphericalCap(double theta_max_rad)
        : theta_max(theta_max_rad),
          c_theta(std::cos(theta_max_rad)),
          s_theta(std::sin(theta_max_rad)) {
        if (!(theta_max_rad > 0.0 && theta_max_rad <= numerics::kPi)) {
            throw std::domain_error("SphericalCap: theta_max must be in (0, pi]");
        }
    }

    // Small slack on the dot product keeps retraction outputs from flapping
    // in and out of membership under round-off.
    bool contains(const Vec3& x, double tol = 1e-12) const {
        return std::abs(x.norm() - 1.0) <= tol && axis.dot(x) >= c_theta - tol;
    }
};

// Total map from R^3 onto the cap: identity (after normalization) on members,
// boundary projection otherwise. Zero maps to the cap axis.
inline Vec3 cap_retract(const Vec3& y, const SphericalCap& cap) {
    const double norm = y.norm();
    if (norm == 0.0) return cap.axis;
    const Vec3 normalized = y / norm;
    if (normalized.dot(cap.axis) >= cap.c_theta) return normalized;
    const Vec3 perp = y - cap.axis * cap.axis.dot(y);
    const double perp_norm = perp.norm();
    if (perp_norm > 0.0) {
        return cap.c_theta * cap.axis + cap.s_theta * (perp / perp_norm);
    }
    return cap.c_theta * cap.axis + cap.s_theta * cap.b_perp;
}

// Deterministic orthonormal basis of the tangent plane at u. Crosses against
// the canonical axis least aligned with u.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& u) {
    int least = 0;
    double best = std::abs(u.x());
    if (std::abs(u.y()) < best) { least = 1; best = std::abs(u.y()); }
    if (std::abs(u.z()) < best) { least = 2; }
    const Vec3 e = Vec3::Unit(least);
    const Vec3 b2 = u.cross(e).normalized();
    const Vec3 b1 = b2.cross(u);
    return {b1, b2};
}

// Antenna element positions and thin-wire dimensions. Element 0 is the active
// antenna at the origin; elements 1..N are couplers.
struct ElementGeometry {
    std::vector<Vec3> centers;
    double dipole_length = 0.0; // D
    double dipole_radius = 0.0; // a

    int num_couplers() const { return static_cast<int>(centers.size()) - 1; }
    int num_elements() const { return static_cast<int>(centers.size()); }

    // Axis of element i: the active antenna is fixed along +z, couplers take
    // their columns from U.
    Vec3 axis_of(int i, const AxisMatrix& axes) const {
        return i == 0 ? Vec3(0.0, 0.0, 1.0) : Vec3(axes.col(i - 1));
    }

    void validate() const {
        if (centers.empty() || centers.front() != Vec3::Zero()) {
            throw std::invalid_argument("ElementGeometry: active element must sit at the origin");
        }
        if (!(dipole_length > 0.0) || !(dipole_radius > 0.0) ||
            !(dipole_radius < dipole_length / 10.0)) {
            throw std::invalid_argument("ElementGeometry: need 0 < radius < length/10");
        }
    }

    // Coupler centers on the x-axis at uniform spacing, active element at 0.
    static ElementGeometry linear_array(int couplers, double spacing, double length, double radius) {
        if (couplers < 0) throw std::invalid_argument("linear_array: negative coupler count");
        ElementGeometry g;
        g.dipole_length = length;
        g.dipole_radius = radius;
        g.centers.reserve(couplers + 1);
        g.centers.emplace_back(Vec3::Zero());
        for (int n = 1; n <= couplers; ++n) {
            g.centers.emplace_back(n * spacing, 0.0, 0.0);
        }
        g.validate();
        return g;
    }
};

// Minimum distance between two segments center +/- half*direction with unit
// directions. Closed form: the interior stationary point when the lines are
// skew, otherwise the minimum over the four clamped box edges.
inline double segment_pair_min_distance(const Vec3& center_i, const Vec3& dir_i,
                                        const Vec3& center_j, const Vec3& dir_j,
                                        double half_length) {
    const Vec3 offset = center_i - center_j;
    const double b = dir_i.dot(dir_j);
    const double d = dir_i.dot(offset);
    const double e = dir_j.dot(offset);
    const double denom = 1.0 - b * b;
    const double h = half_length;
    auto dist_at = [&](double s, double t) { return (offset + s * dir_i - t * dir_j).norm(); };
    if (std::abs(denom) >= 1e-12) {
        const double s0 = (b * e - d) / denom;
        const double t0 = (e - b * d) / denom;
        if (std::abs(s0) <= h && std::abs(t0) <= h) return dist_at(s0, t0);
    }
    double best = std::numeric_limits<double>::infinity();
    for (double s : {-h, h}) {
        best = std::min(best, dist_at(s, std::clamp(e + s * b, -h, h)));
    }
    for (double t : {-h, h}) {
        best = std::min(best, dist_at(std::clamp(t * b - d, -h, h), t));
    }
    return best;
}

// Minimum axis-segment distance between elements i and j under axes U.
inline double segment_min_distance(int i, int j, const AxisMatrix& axes,
                                   const ElementGeometry& geom) {
    if (i == j) throw std::domain_error("segment_min_distance: identical element indices");
    if (i < 0 || j < 0 || i >= geom.num_elements() || j >= geom.num_elements()) {
        throw std::domain_error("segment_min_distance: element index out of range");
    }
    return segment_pair_min_distance(geom.centers[i], geom.axis_of(i, axes),
                                     geom.centers[j], geom.axis_of(j, axes),
                                     0.5 * geom.dipole_length);
}

// Full feasibility: every coupler axis in the cap and all element pairs
// separated by at least one antenna diameter.
inline bool is_feasible(const AxisMatrix& axes, const SphericalCap& cap,
                        const ElementGeometry& geom) {
    if (axes.cols() != geom.num_couplers()) {
        throw std::invalid_argument("is_feasible: axis count does not match geometry");
    }
    for (Eigen::Index n = 0; n < axes.cols(); ++n) {
        if (!cap.contains(axes.col(n))) return false;
    }
    const double clearance = 2.0 * geom.dipole_radius;
    const int m = geom.num_elements();
    for (int i = 0; i < m; ++i) {
        for (int j = i + 1; j < m; ++j) {
            if (segment_min_distance(i, j, axes, geom) < clearance) return false;
        }
    }
    return true;
}

} // namespace rca::geom
