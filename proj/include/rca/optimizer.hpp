// SPDX-License-Identifier: Apache-2.0
//
// Coupler rotation optimization: cross-entropy search over a spherical
// Fibonacci codebook for a feasible starting point, then conditional-gradient
// refinement over the per-coupler spherical caps with feasibility-aware
// Armijo backtracking. The objective and feasibility test are injected so the
// machinery works for both the physical pipeline and analytic test functions.

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rca/geometry.hpp"
#include "rca/random.hpp"

namespace rca::opt {

using geom::AxisMatrix;
using geom::SphericalCap;
using geom::Vec3;

using ObjectiveFn = std::function<double(const AxisMatrix&)>;
using FeasibilityFn = std::function<bool(const AxisMatrix&)>;

struct OptimizerParams {
    double fd_step = 1e-4;        // tangent finite-difference step (rad)
    double armijo_slope = 1e-4;   // sufficient-increase fraction
    // 0.7 keeps the accepted stepsize close to the largest productive one;
    // coarser shrink factors leave long shallow-ascent tails on ridge-shaped
    // objectives.
    double backtrack = 0.7;       // stepsize shrink factor
    double min_step = 1e-6;       // give up below this trial stepsize
    int max_iterations = 200;     // refinement iteration cap
    double tolerance = 1e-6;      // gap and relative-change stop threshold
    int codebook_size = 256;      // spherical Fibonacci codewords
    int cem_samples = 64;         // candidates per CEM iteration
    int cem_iterations = 20;
    double elite_fraction = 0.2;
    double smoothing = 0.7;       // CEM probability update weight

    void validate() const {
        if (!(fd_step > 0.0)) throw std::domain_error("OptimizerParams: fd_step must be positive");
        if (!(armijo_slope > 0.0 && armijo_slope < 1.0))
            throw std::domain_error("OptimizerParams: armijo_slope must be in (0,1)");
        if (!(backtrack > 0.0 && backtrack < 1.0))
            throw std::domain_error("OptimizerParams: backtrack must be in (0,1)");
        if (!(min_step > 0.0)) throw std::domain_error("OptimizerParams: min_step must be positive");
        if (max_iterations < 0) throw std::domain_error("OptimizerParams: negative iteration cap");
        if (!(tolerance > 0.0)) throw std::domain_error("OptimizerParams: tolerance must be positive");
        if (codebook_size < 1) throw std::domain_error("OptimizerParams: empty codebook");
        if (cem_samples < 1) throw std::domain_error("OptimizerParams: cem_samples must be positive");
        if (cem_iterations < 0) throw std::domain_error("OptimizerParams: negative cem_iterations");
        if (!(elite_fraction > 0.0 && elite_fraction <= 1.0))
            throw std::domain_error("OptimizerParams: elite_fraction must be in (0,1]");
        if (!(smoothing > 0.0 && smoothing <= 1.0))
            throw std::domain_error("OptimizerParams: smoothing must be in (0,1]");
    }
};

// Near-uniform deterministic sampling of the cap: golden-angle azimuth
// increments against an equal-area zenith ladder.
struct Codebook {
    std::vector<Vec3> codewords;
    int size() const { return static_cast<int>(codewords.size()); }
};

inline Codebook build_codebook(const SphericalCap& cap, int count) {
    if (count < 1) throw std::domain_error("build_codebook: need at least one codeword");
    const double golden_ratio = 0.5 * (1.0 + std::sqrt(5.0));
    const double two_pi = 2.0 * numerics::kPi;
    Codebook cb;
    cb.codewords.reserve(count);
    for (int i = 1; i <= count; ++i) {
        const double cos_zen =
            std::clamp(1.0 - (i - 0.5) / count * (1.0 - cap.c_theta), -1.0, 1.0);
        const double zen = std::acos(cos_zen);
        const double azi = std::fmod(two_pi * (i - 1) / golden_ratio, two_pi);
        cb.codewords.emplace_back(std::sin(zen) * std::cos(azi),
                                  std::sin(zen) * std::sin(azi), cos_zen);
    }
    return cb;
}

struct CemSample {
    AxisMatrix axes;
    double objective = 0.0;
};

struct CemResult {
    bool found_feasible = false;
    AxisMatrix best;            // valid only when found_feasible
    double best_objective = 0.0;
    Eigen::MatrixXd pmfs;       // codebook_size x couplers, column-stochastic
    std::vector<CemSample> pool;
    long evaluations = 0;
};

// Cross-entropy search over codeword assignments. All categorical draws for
// one iteration are consumed from the seeded stream in (candidate, coupler)
// order before any objective evaluation, so the sample set is independent of
// evaluation scheduling.
inline CemResult cem_initialize(const ObjectiveFn& objective, const FeasibilityFn& feasible,
                                const Codebook& codebook, int couplers,
                                const OptimizerParams& params, std::uint64_t seed) {
    params.validate();
    const int n_codes = codebook.size();
    CemResult result;
    result.pmfs = Eigen::MatrixXd::Constant(n_codes, couplers, 1.0 / n_codes);
    if (params.cem_iterations == 0 || couplers == 0) {
        if (couplers == 0 && params.cem_iterations > 0) {
            // Single degenerate candidate: the empty matrix.
            const AxisMatrix empty(3, 0);
            if (feasible(empty)) {
                result.found_feasible = true;
                result.best = empty;
                result.best_objective = objective(empty);
                result.evaluations = 1;
                result.pool.push_back({empty, result.best_objective});
            }
        }
        return result;
    }

    std::mt19937_64 gen(rng::derive_stream(seed, 0x5ce1));
    std::vector<int> draw(static_cast<std::size_t>(params.cem_samples) * couplers);
    std::vector<int> feasible_index;
    std::vector<double> feasible_objective;

    auto sample_category = [&](int coupler) {
        const double u = rng::uniform_unit(gen);
        double cumulative = 0.0;
        for (int c = 0; c < n_codes; ++c) {
            cumulative += result.pmfs(c, coupler);
            if (u < cumulative) return c;
        }
        return n_codes - 1;
    };

    for (int round = 0; round < params.cem_iterations; ++round) {
        for (int cand = 0; cand < params.cem_samples; ++cand) {
            for (int n = 0; n < couplers; ++n) {
                draw[cand * couplers + n] = sample_category(n);
            }
        }
        feasible_index.clear();
        feasible_objective.clear();
        for (int cand = 0; cand < params.cem_samples; ++cand) {
            AxisMatrix axes(3, couplers);
            for (int n = 0; n < couplers; ++n) {
                axes.col(n) = codebook.codewords[draw[cand * couplers + n]];
            }
            if (!feasible(axes)) continue;
            const double value = objective(axes);
            ++result.evaluations;
            feasible_index.push_back(cand);
            feasible_objective.push_back(value);
            result.pool.push_back({axes, value});
            if (!result.found_feasible || value > result.best_objective) {
                result.found_feasible = true;
                result.best = axes;
                result.best_objective = value;
            }
        }
        if (feasible_index.empty()) continue; // probabilities left unchanged

        const int n_feasible = static_cast<int>(feasible_index.size());
        const int n_elite = std::max(1, static_cast<int>(std::ceil(params.elite_fraction * n_feasible)));
        std::vector<int> order(n_feasible);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return feasible_objective[a] > feasible_objective[b];
        });
        Eigen::MatrixXd elite_frequency = Eigen::MatrixXd::Zero(n_codes, couplers);
        for (int rank = 0; rank < n_elite; ++rank) {
            const int cand = feasible_index[order[rank]];
            for (int n = 0; n < couplers; ++n) {
                elite_frequency(draw[cand * couplers + n], n) += 1.0;
            }
        }
        elite_frequency /= static_cast<double>(n_elite);
        result.pmfs = (1.0 - params.smoothing) * result.pmfs + params.smoothing * elite_frequency;
    }
    return result;
}

// Tangent-space finite-difference gradient estimate at one coupler column.
// Trial rotations are cap-retracted; a difference quotient only uses trials
// that keep the whole matrix feasible (central when both sides qualify,
// one-sided when one does, zero when neither does).
inline Vec3 fd_gradient(const ObjectiveFn& objective, const FeasibilityFn& feasible,
                        const AxisMatrix& axes, int coupler, double objective_at_axes,
                        const SphericalCap& cap, double fd_step) {
    const Vec3 u = axes.col(coupler);
    const auto [b1, b2] = geom::tangent_basis(u);
    Vec3 estimate = Vec3::Zero();
    for (const Vec3& direction : {b1, b2}) {
        AxisMatrix forward = axes;
        forward.col(coupler) = geom::cap_retract(u + fd_step * direction, cap);
        AxisMatrix backward = axes;
        backward.col(coupler) = geom::cap_retract(u - fd_step * direction, cap);
        const bool fwd_ok = feasible(forward);
        const bool bwd_ok = feasible(backward);
        double quotient = 0.0;
        if (fwd_ok && bwd_ok) {
            quotient = (objective(forward) - objective(backward)) / (2.0 * fd_step);
        } else if (fwd_ok) {
            quotient = (objective(forward) - objective_at_axes) / fd_step;
        } else if (bwd_ok) {
            quotient = (objective_at_axes - objective(backward)) / fd_step;
        }
        estimate += quotient * direction;
    }
    return estimate;
}

inline Vec3 project_tangent(const Vec3& u, const Vec3& g) {
    return g - u * u.dot(g);
}

// Closed-form maximizer of q^T x over the cap. Ties at q = 0 keep the current
// orientation; a boundary maximizer with no component orthogonal to the cap
// axis is resolved with the fixed perpendicular direction.
inline Vec3 linear_oracle(const Vec3& q, const Vec3& u_current, const SphericalCap& cap) {
    const double magnitude = q.norm();
    if (magnitude == 0.0) return u_current;
    const Vec3 direction = q / magnitude;
    if (direction.dot(cap.axis) >= cap.c_theta) return direction;
    const Vec3 perp = q - cap.axis * cap.axis.dot(q);
    const double perp_norm = perp.norm();
    if (perp_norm > 0.0) return cap.c_theta * cap.axis + cap.s_theta * (perp / perp_norm);
    return cap.c_theta * cap.axis + cap.s_theta * cap.b_perp;
}

enum class StopReason {
    stationary_gap,     // conditional-gradient gap below tolerance
    step_exhausted,     // no acceptable Armijo step above min_step
    converged,          // relative objective change below tolerance
    iteration_limit,
};

struct IterationRecord {
    double objective = 0.0;
    double gap = 0.0;   // conditional-gradient gap driving this step
    double step = 0.0;  // accepted stepsize (0 for the initial record)
};

struct OptimizationTrace {
    std::vector<IterationRecord> iterations; // [0] is the initial point
    AxisMatrix best;
    double best_objective = 0.0;
    StopReason stop = StopReason::iteration_limit;
    bool used_fallback = false;
    long evaluations = 0;
    double wall_seconds = 0.0;

    int accepted_steps() const { return static_cast<int>(iterations.size()) - 1; }
    bool converged_before_limit() const { return stop != StopReason::iteration_limit; }
};

// Conditional-gradient refinement from a feasible starting matrix. Accepted
// iterates stay feasible and the objective sequence is nondecreasing.
inline OptimizationTrace refine(const ObjectiveFn& objective, const FeasibilityFn& feasible,
                                const AxisMatrix& start, const SphericalCap& cap,
                                const OptimizerParams& params) {
    params.validate();
    if (!feasible(start)) {
        throw std::domain_error("refine: starting rotation matrix is infeasible");
    }
    const auto t_begin = std::chrono::steady_clock::now();
    const int couplers = static_cast<int>(start.cols());
    OptimizationTrace trace;
    trace.best = start;
    trace.best_objective = objective(start);
    trace.evaluations = 1;
    trace.iterations.push_back({trace.best_objective, 0.0, 0.0});

    std::vector<Vec3> oracle_points(couplers);
    std::vector<Vec3> gradients(couplers);
    for (int t = 0; t < params.max_iterations; ++t) {
        double gap = 0.0;
        for (int n = 0; n < couplers; ++n) {
            const Vec3 raw = fd_gradient(objective, feasible, trace.best, n,
                                         trace.best_objective, cap, params.fd_step);
            trace.evaluations += 4; // up to four trial evaluations per coupler
            const Vec3 q = project_tangent(trace.best.col(n), raw);
            gradients[n] = q;
            oracle_points[n] = linear_oracle(q, trace.best.col(n), cap);
            gap += q.dot(oracle_points[n] - Vec3(trace.best.col(n)));
        }
        if (gap <= params.tolerance) {
            trace.stop = StopReason::stationary_gap;
            break;
        }

        double step = 1.0;
        bool accepted = false;
        AxisMatrix candidate(3, couplers);
        double candidate_objective = 0.0;
        while (step >= params.min_step) {
            for (int n = 0; n < couplers; ++n) {
                const Vec3 moved =
                    Vec3(trace.best.col(n)) + step * (oracle_points[n] - Vec3(trace.best.col(n)));
                candidate.col(n) = geom::cap_retract(moved, cap);
            }
            if (feasible(candidate)) {
                candidate_objective = objective(candidate);
                ++trace.evaluations;
                if (candidate_objective >=
                    trace.best_objective + params.armijo_slope * step * gap) {
                    accepted = true;
                    break;
                }
            }
            step *= params.backtrack;
        }
        if (!accepted) {
            trace.stop = StopReason::step_exhausted;
            break;
        }

        const double previous = trace.best_objective;
        trace.best = candidate;
        trace.best_objective = candidate_objective;
        trace.iterations.push_back({candidate_objective, gap, step});
        const double rel_change =
            std::abs(candidate_objective - previous) / std::max(std::abs(previous), 1.0);
        if (rel_change <= params.tolerance) {
            trace.stop = StopReason::converged;
            break;
        }
    }
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return trace;
}

// Full pipeline: codebook, CEM initialization, refinement. The starting point
// is the better of the CEM best and the fallback matrix (when feasible), so
// the refined result can never trail a feasible fallback evaluation.
inline OptimizationTrace optimize(const ObjectiveFn& objective, const FeasibilityFn& feasible,
                                  const AxisMatrix& fallback, const SphericalCap& cap,
                                  const OptimizerParams& params, std::uint64_t seed) {
    params.validate();
    const auto t_begin = std::chrono::steady_clock::now();
    const int couplers = static_cast<int>(fallback.cols());
    const Codebook codebook = build_codebook(cap, params.codebook_size);
    const CemResult cem = cem_initialize(objective, feasible, codebook, couplers, params, seed);

    bool have_start = false;
    bool used_fallback = false;
    AxisMatrix start;
    double start_objective = 0.0;
    if (cem.found_feasible) {
        have_start = true;
        start = cem.best;
        start_objective = cem.best_objective;
    }
    if (feasible(fallback)) {
        const double fallback_objective = objective(fallback);
        if (!have_start || fallback_objective > start_objective) {
            have_start = true;
            used_fallback = true;
            start = fallback;
            start_objective = fallback_objective;
        }
    }
    if (!have_start) {
        throw std::runtime_error(
            "optimize: no feasible sample found and the fallback rotation is infeasible");
    }

    OptimizationTrace trace = refine(objective, feasible, start, cap, params);
    trace.used_fallback = used_fallback;
    trace.evaluations += cem.evaluations + 1;
    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
    return trace;
}

} // namespace rca::opt
