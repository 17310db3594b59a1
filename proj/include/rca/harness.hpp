// SPDX-License-Identifier: Apache-2.0
//
// Experiment harness: system configuration with file round-trip, seeded
// channel generation, the benchmark schemes, sweep experiments with CSV and
// manifest output, and deterministic seed-parallel execution.

#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rca/beamforming.hpp"
#include "rca/optimizer.hpp"
#include "rca/random.hpp"

namespace rca::harness {

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr double kSpeedOfLight = 299792458.0;

// Independent random substreams per experiment seed.
inline constexpr std::uint64_t kChannelStream = 1;
inline constexpr std::uint64_t kOptimizerStream = 2;
inline constexpr std::uint64_t kFlexiblePositionStream = 3;

using bf::LoadMatrix;
using bf::Scenario;
using channel::ChannelRealization;
using geom::AxisMatrix;
using geom::ElementGeometry;
using geom::SphericalCap;
using geom::Vec3;

enum class ActiveArrayBeamformer { matched_filter, generalized_eigen };

// Table-I defaults; spacing left unset resolves to a quarter wavelength.
struct SystemConfig {
    double carrier_frequency_hz = 7.0e9;
    double dipole_length_wavelengths = 0.5;
    double dipole_radius_wavelengths = 1.0 / 500.0;
    int num_couplers = 3;
    double coupler_spacing_m = std::numeric_limits<double>::quiet_NaN();
    double load_resistance_ohm = 0.05;
    double load_reactance_ohm = 50.0;
    double theta_max_rad = numerics::kPi;
    double transmit_power_dbm = 30.0;
    double noise_power_dbm = -90.0;
    double reference_distance_m = 250.0;
    int num_paths = 6;
    std::uint64_t rng_seed = 1;
    int quadrature_order = em::kDefaultQuadratureOrder;
    ActiveArrayBeamformer active_array_beamformer = ActiveArrayBeamformer::matched_filter;
    opt::OptimizerParams optimizer;

    double wavelength() const { return kSpeedOfLight / carrier_frequency_hz; }
    double coupler_spacing() const {
        return std::isnan(coupler_spacing_m) ? 0.25 * wavelength() : coupler_spacing_m;
    }
    double transmit_power_w() const { return 1e-3 * std::pow(10.0, transmit_power_dbm / 10.0); }
    double noise_power_w() const { return 1e-3 * std::pow(10.0, noise_power_dbm / 10.0); }
    std::complex<double> load_impedance() const { return {load_resistance_ohm, load_reactance_ohm}; }
    // Free-space power gain at the reference distance.
    double pathloss_gain() const {
        const double ratio = wavelength() / (4.0 * numerics::kPi * reference_distance_m);
        return ratio * ratio;
    }

    void validate() const {
        if (!(carrier_frequency_hz > 0.0)) throw std::invalid_argument("config: carrier_frequency_hz must be positive");
        if (!(dipole_length_wavelengths > 0.0)) throw std::invalid_argument("config: dipole_length_wavelengths must be positive");
        if (!(dipole_radius_wavelengths > 0.0)) throw std::invalid_argument("config: dipole_radius_wavelengths must be positive");
        if (num_couplers < 0) throw std::invalid_argument("config: num_couplers must be nonnegative");
        if (!(coupler_spacing() > 0.0)) throw std::invalid_argument("config: coupler_spacing_m must be positive");
        if (!(theta_max_rad > 0.0 && theta_max_rad <= numerics::kPi)) throw std::invalid_argument("config: theta_max_rad must be in (0, pi]");
        if (!(reference_distance_m > 0.0)) throw std::invalid_argument("config: reference_distance_m must be positive");
        if (num_paths < 1) throw std::invalid_argument("config: num_paths must be at least 1");
        if (quadrature_order < 2) throw std::invalid_argument("config: quadrature_order must be at least 2");
        optimizer.validate();
    }
};

// ---------------------------------------------------------------------------
// Config file round-trip: one `key = value` per line, '#' comments, unknown
// keys rejected. Field names mirror SystemConfig.

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string trim(const std::string& s) {
    std::size_t lo = 0;
    std::size_t hi = s.size();
    while (lo < hi && std::isspace(static_cast<unsigned char>(s[lo]))) ++lo;
    while (hi > lo && std::isspace(static_cast<unsigned char>(s[hi - 1]))) --hi;
    return s.substr(lo, hi - lo);
}

} // namespace detail

inline std::string serialize_config(const SystemConfig& cfg) {
    std::ostringstream out;
    auto put = [&](const char* key, const std::string& value) { out << key << " = " << value << "\n"; };
    auto put_d = [&](const char* key, double v) { put(key, detail::format_double(v)); };
    put_d("carrier_frequency_hz", cfg.carrier_frequency_hz);
    put_d("dipole_length_wavelengths", cfg.dipole_length_wavelengths);
    put_d("dipole_radius_wavelengths", cfg.dipole_radius_wavelengths);
    put("num_couplers", std::to_string(cfg.num_couplers));
    if (!std::isnan(cfg.coupler_spacing_m)) put_d("coupler_spacing_m", cfg.coupler_spacing_m);
    put_d("load_resistance_ohm", cfg.load_resistance_ohm);
    put_d("load_reactance_ohm", cfg.load_reactance_ohm);
    put_d("theta_max_rad", cfg.theta_max_rad);
    put_d("transmit_power_dbm", cfg.transmit_power_dbm);
    put_d("noise_power_dbm", cfg.noise_power_dbm);
    put_d("reference_distance_m", cfg.reference_distance_m);
    put("num_paths", std::to_string(cfg.num_paths));
    put("rng_seed", std::to_string(cfg.rng_seed));
    put("quadrature_order", std::to_string(cfg.quadrature_order));
    put("active_array_beamformer",
        cfg.active_array_beamformer == ActiveArrayBeamformer::matched_filter ? "matched" : "eigen");
    put_d("fd_step", cfg.optimizer.fd_step);
    put_d("armijo_slope", cfg.optimizer.armijo_slope);
    put_d("backtrack", cfg.optimizer.backtrack);
    put_d("min_step", cfg.optimizer.min_step);
    put("max_iterations", std::to_string(cfg.optimizer.max_iterations));
    put_d("tolerance", cfg.optimizer.tolerance);
    put("codebook_size", std::to_string(cfg.optimizer.codebook_size));
    put("cem_samples", std::to_string(cfg.optimizer.cem_samples));
    put("cem_iterations", std::to_string(cfg.optimizer.cem_iterations));
    put_d("elite_fraction", cfg.optimizer.elite_fraction);
    put_d("smoothing", cfg.optimizer.smoothing);
    return out.str();
}

inline SystemConfig parse_config_text(const std::string& text) {
    SystemConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = detail::trim(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string value = detail::trim(stripped.substr(eq + 1));
        auto as_double = [&]() {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument("config key " + key + ": malformed number '" + value + "'");
            return v;
        };
        auto as_int = [&]() {
            std::size_t used = 0;
            const long v = std::stol(value, &used);
            if (used != value.size()) throw std::invalid_argument("config key " + key + ": malformed integer '" + value + "'");
            return static_cast<int>(v);
        };
        if (key == "carrier_frequency_hz") cfg.carrier_frequency_hz = as_double();
        else if (key == "dipole_length_wavelengths") cfg.dipole_length_wavelengths = as_double();
        else if (key == "dipole_radius_wavelengths") cfg.dipole_radius_wavelengths = as_double();
        else if (key == "num_couplers") cfg.num_couplers = as_int();
        else if (key == "coupler_spacing_m") cfg.coupler_spacing_m = as_double();
        else if (key == "load_resistance_ohm") cfg.load_resistance_ohm = as_double();
        else if (key == "load_reactance_ohm") cfg.load_reactance_ohm = as_double();
        else if (key == "theta_max_rad") cfg.theta_max_rad = as_double();
        else if (key == "transmit_power_dbm") cfg.transmit_power_dbm = as_double();
        else if (key == "noise_power_dbm") cfg.noise_power_dbm = as_double();
        else if (key == "reference_distance_m") cfg.reference_distance_m = as_double();
        else if (key == "num_paths") cfg.num_paths = as_int();
        else if (key == "rng_seed") cfg.rng_seed = static_cast<std::uint64_t>(std::stoull(value));
        else if (key == "quadrature_order") cfg.quadrature_order = as_int();
        else if (key == "active_array_beamformer") {
            if (value == "matched") cfg.active_array_beamformer = ActiveArrayBeamformer::matched_filter;
            else if (value == "eigen") cfg.active_array_beamformer = ActiveArrayBeamformer::generalized_eigen;
            else throw std::invalid_argument("config: active_array_beamformer must be 'matched' or 'eigen'");
        }
        else if (key == "fd_step") cfg.optimizer.fd_step = as_double();
        else if (key == "armijo_slope") cfg.optimizer.armijo_slope = as_double();
        else if (key == "backtrack") cfg.optimizer.backtrack = as_double();
        else if (key == "min_step") cfg.optimizer.min_step = as_double();
        else if (key == "max_iterations") cfg.optimizer.max_iterations = as_int();
        else if (key == "tolerance") cfg.optimizer.tolerance = as_double();
        else if (key == "codebook_size") cfg.optimizer.codebook_size = as_int();
        else if (key == "cem_samples") cfg.optimizer.cem_samples = as_int();
        else if (key == "cem_iterations") cfg.optimizer.cem_iterations = as_int();
        else if (key == "elite_fraction") cfg.optimizer.elite_fraction = as_double();
        else if (key == "smoothing") cfg.optimizer.smoothing = as_double();
        else throw std::invalid_argument("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

inline SystemConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    const std::string body = text.str();
    // A manifest may be passed in place of a config; recover the embedded one.
    const auto first = body.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && body[first] == '{') {
        const auto manifest = nlohmann::json::parse(body);
        if (!manifest.contains("config_text")) {
            throw std::runtime_error("JSON input has no 'config_text' field: " + path.string());
        }
        return parse_config_text(manifest["config_text"].get<std::string>());
    }
    return parse_config_text(body);
}

// ---------------------------------------------------------------------------
// Channel generation and scenario assembly.

// Departure angles uniform over the sphere, path gains CN(0, beta/L) with
// beta the free-space pathloss gain at the reference distance.
inline ChannelRealization generate_channel(const SystemConfig& cfg, std::uint64_t seed) {
    if (cfg.num_paths < 1) throw std::domain_error("generate_channel: need at least one path");
    std::mt19937_64 gen(rng::derive_stream(seed, kChannelStream));
    const double per_path_amplitude = std::sqrt(cfg.pathloss_gain() / cfg.num_paths);
    ChannelRealization ch;
    ch.paths.reserve(cfg.num_paths);
    for (int l = 0; l < cfg.num_paths; ++l) {
        const double zenith = std::acos(1.0 - 2.0 * rng::uniform_unit(gen));
        const double azimuth = rng::uniform_in(gen, -numerics::kPi, numerics::kPi);
        const std::complex<double> gain = per_path_amplitude * rng::standard_complex_gaussian(gen);
        ch.paths.push_back({zenith, azimuth, gain});
    }
    return ch;
}

inline em::WireParameters wire_parameters(const SystemConfig& cfg) {
    em::WireParameters wp;
    wp.wavenumber = 2.0 * numerics::kPi / cfg.wavelength();
    wp.dipole_length = cfg.dipole_length_wavelengths * cfg.wavelength();
    wp.dipole_radius = cfg.dipole_radius_wavelengths * cfg.wavelength();
    wp.wave_impedance = 376.7303;
    return wp;
}

inline Scenario make_scenario(const SystemConfig& cfg, ChannelRealization ch) {
    cfg.validate();
    Scenario s;
    s.wire = wire_parameters(cfg);
    s.geometry = ElementGeometry::linear_array(cfg.num_couplers, cfg.coupler_spacing(),
                                               s.wire.dipole_length, s.wire.dipole_radius);
    s.cap = SphericalCap(cfg.theta_max_rad);
    s.loads = LoadMatrix::uniform(cfg.num_couplers, cfg.load_impedance());
    s.channel = std::move(ch);
    s.pattern_norm = channel::pattern_normalization(s.wire);
    s.transmit_power_w = cfg.transmit_power_w();
    s.noise_power_w = cfg.noise_power_w();
    s.quadrature_order = cfg.quadrature_order;
    return s;
}

inline AxisMatrix upright_axes(int couplers) {
    AxisMatrix axes = AxisMatrix::Zero(3, couplers);
    axes.row(2).setOnes();
    return axes;
}

// ---------------------------------------------------------------------------
// Schemes.

inline constexpr const char* kSchemeRca = "rca";
inline constexpr const char* kSchemeFixedRotation = "fixed-rotation";
inline constexpr const char* kSchemeActiveArray = "active-array";
inline constexpr const char* kSchemeFlexiblePosition = "flexible-position (stand-in)";

struct SchemeRun {
    std::string scheme;
    double rate_bps_hz = 0.0;
    double gain = 0.0;   // power/noise-independent channel gain
    int iterations = 0;
    double wall_ms = 0.0;
};

struct RcaRun {
    SchemeRun run;
    opt::OptimizationTrace trace;
    AxisMatrix optimized_axes;
};

// Optimized coupler rotations for one seeded scenario.
inline RcaRun run_rca(const SystemConfig& cfg, const Scenario& scenario, std::uint64_t seed) {
    bf::ScenarioEvaluator eval(scenario);
    const AxisMatrix fallback = upright_axes(cfg.num_couplers);
    auto trace = opt::optimize([&](const AxisMatrix& u) { return eval.objective(u); },
                               [&](const AxisMatrix& u) { return eval.feasible(u); }, fallback,
                               scenario.cap, cfg.optimizer,
                               rng::derive_stream(seed, kOptimizerStream));
    RcaRun out;
    out.optimized_axes = trace.best;
    out.run.scheme = kSchemeRca;
    out.run.gain = std::exp(trace.best_objective);
    const double snr = scenario.transmit_power_w / scenario.noise_power_w * out.run.gain;
    out.run.rate_bps_hz = std::log2(1.0 + snr);
    out.run.iterations = trace.accepted_steps();
    out.run.wall_ms = trace.wall_seconds * 1e3;
    out.trace = std::move(trace);
    return out;
}

// All couplers parallel to the active element; no optimization.
inline SchemeRun run_fixed_rotation(const SystemConfig& cfg, const Scenario& scenario) {
    const AxisMatrix axes = upright_axes(cfg.num_couplers);
    if (!geom::is_feasible(axes, scenario.cap, scenario.geometry)) {
        throw std::runtime_error("fixed-rotation baseline: upright configuration is infeasible");
    }
    bf::ScenarioEvaluator eval(scenario);
    const auto e = eval.evaluate(axes);
    return {kSchemeFixedRotation, e.rate, e.gain, 0, 0.0};
}

// All-active uniform linear array with omnidirectional element responses and
// coupling-aware power normalization.
inline SchemeRun run_active_array(const SystemConfig& cfg, const ChannelRealization& ch) {
    const auto wp = wire_parameters(cfg);
    const int elements = cfg.num_couplers + 1;
    const auto geometry = ElementGeometry::linear_array(cfg.num_couplers, 0.5 * cfg.wavelength(),
                                                        wp.dipole_length, wp.dipole_radius);
    const AxisMatrix axes = upright_axes(cfg.num_couplers);
    const auto z = em::assemble_impedance_matrix(axes, geometry, wp, cfg.quadrature_order);
    const double element_scale = std::sqrt(wp.wave_impedance / numerics::kPi);
    Eigen::VectorXcd h = Eigen::VectorXcd::Zero(elements);
    for (const auto& path : ch.paths) {
        const Vec3 dir = channel::path_direction(path.zenith, path.azimuth);
        for (int i = 0; i < elements; ++i) {
            const double phase = wp.wavenumber * dir.dot(geometry.centers[i]);
            h(i) += path.gain * std::complex<double>(std::cos(phase), std::sin(phase)) * element_scale;
        }
    }
    SchemeRun out{kSchemeActiveArray, 0.0, 0.0, 0, 0.0};
    if (h.squaredNorm() == 0.0) return out;
    const Eigen::MatrixXd re_z = z.entries.real();
    Eigen::VectorXcd w;
    if (cfg.active_array_beamformer == ActiveArrayBeamformer::matched_filter) {
        w = h.conjugate();
    } else {
        // Generalized Rayleigh optimum of |h^T w|^2 / (w^H Re{Z} w): conj(Re{Z}^{-1} h).
        const Eigen::LLT<Eigen::MatrixXd> llt(re_z);
        if (llt.info() != Eigen::Success) {
            throw std::runtime_error("active-array baseline: Re{Z} not positive definite");
        }
        const Eigen::VectorXd solved_re = llt.solve(h.real().eval());
        const Eigen::VectorXd solved_im = llt.solve(h.imag().eval());
        w = solved_re.cast<std::complex<double>>() -
            std::complex<double>(0.0, 1.0) * solved_im.cast<std::complex<double>>();
    }
    const std::complex<double> coupled = (h.array() * w.array()).sum();
    const double power = bf::transmit_power_quadratic(z, w);
    out.gain = std::norm(coupled) / power;
    out.rate_bps_hz = std::log2(1.0 + cfg.transmit_power_w() / cfg.noise_power_w() * out.gain);
    return out;
}

namespace detail {

// Mutual impedance between parallel upright dipoles depends only on the
// horizontal center distance; memoizing by distance makes the position
// search cheap on a shared grid.
class ParallelPairImpedance {
public:
    ParallelPairImpedance(const em::WireParameters& wp, int order) : wp_(wp), order_(order) {}

    std::complex<double> at_distance(double distance) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, &distance, sizeof(double));
        const auto it = memo_.find(bits);
        if (it != memo_.end()) return it->second;
        const Vec3 z_axis(0.0, 0.0, 1.0);
        const auto value = em::mutual_impedance(Vec3(0, 0, 0), z_axis, Vec3(distance, 0, 0),
                                                z_axis, wp_, order_);
        memo_.emplace(bits, value);
        return value;
    }

private:
    em::WireParameters wp_;
    int order_;
    std::unordered_map<std::uint64_t, std::complex<double>> memo_;
};

} // namespace detail

// Passive couplers translating on a square grid around the active element,
// upright axes and omnidirectional responses; positions searched with the
// same cross-entropy machinery used for rotations. A stand-in for the exact
// flexible-position optimizer from the literature, and labeled as such.
inline SchemeRun run_flexible_position(const SystemConfig& cfg, const ChannelRealization& ch,
                                       std::uint64_t seed) {
    const auto wp = wire_parameters(cfg);
    const double lambda = cfg.wavelength();
    const int couplers = cfg.num_couplers;
    SchemeRun out{kSchemeFlexiblePosition, 0.0, 0.0, 0, 0.0};

    // 16x16 grid over the 0.8-wavelength square movement region.
    constexpr int kGridSide = 16;
    opt::Codebook positions;
    positions.codewords.reserve(kGridSide * kGridSide);
    for (int iy = 0; iy < kGridSide; ++iy) {
        for (int ix = 0; ix < kGridSide; ++ix) {
            const double x = -0.4 * lambda + 0.8 * lambda * ix / (kGridSide - 1);
            const double y = -0.4 * lambda + 0.8 * lambda * iy / (kGridSide - 1);
            positions.codewords.emplace_back(x, y, 0.0);
        }
    }
    const double min_spacing = 2.0 * wp.dipole_radius + lambda / 100.0;

    auto spacing_ok = [&](const AxisMatrix& centers) {
        for (int i = 0; i < couplers; ++i) {
            if (centers.col(i).norm() < min_spacing) return false; // active at origin
            for (int j = i + 1; j < couplers; ++j) {
                if ((centers.col(i) - centers.col(j)).norm() < min_spacing) return false;
            }
        }
        return true;
    };

    detail::ParallelPairImpedance pair_memo(wp, cfg.quadrature_order);
    const std::complex<double> zs = em::self_impedance(wp);
    const double element_scale = std::sqrt(wp.wave_impedance / numerics::kPi);
    const LoadMatrix loads = LoadMatrix::uniform(couplers, cfg.load_impedance());

    auto gain_at = [&](const AxisMatrix& centers) {
        const int elements = couplers + 1;
        em::ImpedanceMatrix z;
        z.entries.resize(elements, elements);
        z.entries.diagonal().setConstant(zs);
        for (int i = 0; i < elements; ++i) {
            const Vec3 pi = i == 0 ? Vec3::Zero() : Vec3(centers.col(i - 1));
            for (int j = i + 1; j < elements; ++j) {
                const Vec3 pj = j == 0 ? Vec3::Zero() : Vec3(centers.col(j - 1));
                const auto zij = pair_memo.at_distance((pi - pj).norm());
                z.entries(i, j) = zij;
                z.entries(j, i) = zij;
            }
        }
        const auto sol = bf::solve_beamforming(z, loads);
        Eigen::VectorXcd h = Eigen::VectorXcd::Zero(elements);
        for (const auto& path : ch.paths) {
            const Vec3 dir = channel::path_direction(path.zenith, path.azimuth);
            for (int i = 0; i < elements; ++i) {
                const Vec3 pos = i == 0 ? Vec3::Zero() : Vec3(centers.col(i - 1));
                const double phase = wp.wavenumber * dir.dot(pos);
                h(i) += path.gain * std::complex<double>(std::cos(phase), std::sin(phase)) *
                        element_scale;
            }
        }
        const std::complex<double> coupled = (h.array() * sol.port_weights.array()).sum();
        return std::norm(coupled) / bf::transmit_power_quadratic(z, sol.port_weights);
    };
    auto objective = [&](const AxisMatrix& centers) {
        const double gain = gain_at(centers);
        return gain > 0.0 ? std::log(gain) : bf::kNullObjective;
    };

    const auto cem = opt::cem_initialize(objective, spacing_ok, positions, couplers,
                                         cfg.optimizer,
                                         rng::derive_stream(seed, kFlexiblePositionStream));

    // A fixed well-separated default enters the comparison, mirroring the
    // fallback handling of the rotation optimizer.
    bool have_best = cem.found_feasible;
    double best_objective = cem.found_feasible ? cem.best_objective : 0.0;
    static constexpr int kDefaultCells[8][2] = {{0, 0},  {15, 15}, {0, 15}, {15, 0},
                                                {7, 0},  {7, 15},  {0, 7},  {15, 7}};
    if (couplers <= 8) {
        AxisMatrix fallback(3, couplers);
        for (int n = 0; n < couplers; ++n) {
            fallback.col(n) = positions.codewords[kDefaultCells[n][1] * kGridSide + kDefaultCells[n][0]];
        }
        if (spacing_ok(fallback)) {
            const double fallback_objective = objective(fallback);
            if (!have_best || fallback_objective > best_objective) {
                have_best = true;
                best_objective = fallback_objective;
            }
        }
    }
    if (!have_best) {
        throw std::runtime_error("flexible-position baseline: no feasible position set found");
    }
    out.gain = std::exp(best_objective);
    out.rate_bps_hz = std::log2(1.0 + cfg.transmit_power_w() / cfg.noise_power_w() * out.gain);
    return out;
}

// ---------------------------------------------------------------------------
// Parallel seed fan-out with deterministic gather (results indexed by seed).

template <class Fn>
void parallel_for_index(int count, Fn&& fn) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const unsigned workers = std::min<unsigned>(hw, static_cast<unsigned>(std::max(count, 1)));
    if (workers <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next(0);
    std::vector<std::thread> pool;
    std::exception_ptr failure;
    std::mutex failure_guard;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= count) return;
                try {
                    fn(i);
                } catch (...) {
                    std::scoped_lock lock(failure_guard);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Experiments.

enum class Sweep { power, couplers, paths, theta_max, convergence, beampattern };

inline Sweep parse_sweep(const std::string& name) {
    if (name == "power") return Sweep::power;
    if (name == "N") return Sweep::couplers;
    if (name == "L") return Sweep::paths;
    if (name == "theta_max") return Sweep::theta_max;
    if (name == "convergence") return Sweep::convergence;
    if (name == "beampattern") return Sweep::beampattern;
    throw std::invalid_argument("unknown sweep '" + name +
                                "' (expected power|N|L|theta_max|convergence|beampattern)");
}

inline const char* sweep_name(Sweep sweep) {
    switch (sweep) {
        case Sweep::power: return "power";
        case Sweep::couplers: return "N";
        case Sweep::paths: return "L";
        case Sweep::theta_max: return "theta_max";
        case Sweep::convergence: return "convergence";
        case Sweep::beampattern: return "beampattern";
    }
    return "?";
}

struct RunRow {
    double sweep_value = 0.0;
    std::string scheme;
    std::uint64_t seed = 0;
    double rate_bps_hz = 0.0;
    int iterations = 0;
    double wall_ms = 0.0; // written to timings.csv only
};

struct ConvergenceRow {
    int iteration = 0;
    std::uint64_t seed = 0;
    double objective = 0.0;
    double rate_bps_hz = 0.0;
};

struct BeampatternRow {
    double phi_deg = 0.0;
    std::string scheme;
    std::uint64_t seed = 0;
    double gain_db = 0.0;
};

struct ExperimentResult {
    std::string scheme;
    std::vector<double> rates;
    double mean_rate = 0.0;
};

struct ExperimentOutput {
    std::vector<RunRow> rows;
    std::vector<ConvergenceRow> convergence;
    std::vector<BeampatternRow> beampattern;
    std::vector<std::string> files_written;

    // Per-scheme aggregate at one sweep value.
    ExperimentResult aggregate(const std::string& scheme, double sweep_value) const {
        ExperimentResult agg;
        agg.scheme = scheme;
        for (const auto& row : rows) {
            if (row.scheme == scheme && row.sweep_value == sweep_value) {
                agg.rates.push_back(row.rate_bps_hz);
            }
        }
        if (!agg.rates.empty()) {
            double sum = 0.0;
            for (double r : agg.rates) sum += r;
            agg.mean_rate = sum / static_cast<double>(agg.rates.size());
        }
        return agg;
    }
};

namespace detail {

struct SeedOutcome {
    std::vector<RunRow> rows;
    std::vector<ConvergenceRow> convergence;
    std::vector<BeampatternRow> beampattern;
};

inline double rate_from_gain(double gain, const SystemConfig& cfg) {
    return std::log2(1.0 + cfg.transmit_power_w() / cfg.noise_power_w() * gain);
}

// All four schemes at one configuration; gains are reused across power points.
inline void append_scheme_rows(const SystemConfig& cfg, double sweep_value, std::uint64_t seed,
                               const std::vector<double>& power_points, SeedOutcome& outcome) {
    const auto ch = generate_channel(cfg, seed);
    const auto scenario = make_scenario(cfg, ch);
    const auto rca = run_rca(cfg, scenario, seed);
    const auto fixed = run_fixed_rotation(cfg, scenario);
    const auto active = run_active_array(cfg, ch);
    const auto flexible = run_flexible_position(cfg, ch, seed);
    for (double p_dbm : power_points) {
        SystemConfig at_power = cfg;
        at_power.transmit_power_dbm = p_dbm;
        const double value = power_points.size() > 1 ? p_dbm : sweep_value;
        outcome.rows.push_back({value, rca.run.scheme, seed, rate_from_gain(rca.run.gain, at_power),
                                rca.run.iterations, rca.run.wall_ms});
        outcome.rows.push_back({value, fixed.scheme, seed, rate_from_gain(fixed.gain, at_power), 0, 0.0});
        outcome.rows.push_back({value, active.scheme, seed, rate_from_gain(active.gain, at_power), 0, 0.0});
        outcome.rows.push_back({value, flexible.scheme, seed, rate_from_gain(flexible.gain, at_power), 0, 0.0});
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + path.string());
    out << body;
    if (!out) throw std::runtime_error("failed writing output file: " + path.string());
}

} // namespace detail

// Runs one sweep over `num_seeds` seeded scenarios (seed values rng_seed,
// rng_seed+1, ...) and writes data.csv, timings.csv, manifest.json, plus
// convergence.csv / beampattern.csv for those sweeps.
inline ExperimentOutput run_experiment(const SystemConfig& cfg, Sweep sweep, int num_seeds,
                                       const std::filesystem::path& out_dir) {
    cfg.validate();
    if (num_seeds < 1) throw std::invalid_argument("run_experiment: need at least one seed");
    std::filesystem::create_directories(out_dir);

    std::vector<std::uint64_t> seeds(num_seeds);
    for (int s = 0; s < num_seeds; ++s) seeds[s] = cfg.rng_seed + static_cast<std::uint64_t>(s);

    std::vector<detail::SeedOutcome> outcomes(num_seeds);
    const double fixed_zenith = 55.0 * numerics::kPi / 180.0;

    switch (sweep) {
        case Sweep::power: {
            const std::vector<double> powers = {0, 5, 10, 15, 20, 25, 30};
            parallel_for_index(num_seeds, [&](int s) {
                detail::append_scheme_rows(cfg, 0.0, seeds[s], powers, outcomes[s]);
            });
            break;
        }
        case Sweep::couplers: {
            parallel_for_index(num_seeds, [&](int s) {
                for (int n = 1; n <= 6; ++n) {
                    SystemConfig sub = cfg;
                    sub.num_couplers = n;
                    detail::append_scheme_rows(sub, n, seeds[s], {cfg.transmit_power_dbm}, outcomes[s]);
                }
            });
            break;
        }
        case Sweep::paths: {
            parallel_for_index(num_seeds, [&](int s) {
                for (int l = 1; l <= 12; ++l) {
                    SystemConfig sub = cfg;
                    sub.num_paths = l;
                    detail::append_scheme_rows(sub, l, seeds[s], {cfg.transmit_power_dbm}, outcomes[s]);
                }
            });
            break;
        }
        case Sweep::theta_max: {
            const std::vector<double> degrees = {60.0, 175.0};
            parallel_for_index(num_seeds, [&](int s) {
                for (double deg : degrees) {
                    SystemConfig sub = cfg;
                    sub.theta_max_rad = deg * numerics::kPi / 180.0;
                    detail::append_scheme_rows(sub, deg, seeds[s], {cfg.transmit_power_dbm}, outcomes[s]);
                }
            });
            break;
        }
        case Sweep::convergence: {
            parallel_for_index(num_seeds, [&](int s) {
                const auto ch = generate_channel(cfg, seeds[s]);
                const auto scenario = make_scenario(cfg, ch);
                const auto rca = run_rca(cfg, scenario, seeds[s]);
                const double snr_scale = cfg.transmit_power_w() / cfg.noise_power_w();
                for (std::size_t t = 0; t < rca.trace.iterations.size(); ++t) {
                    const double phi = rca.trace.iterations[t].objective;
                    const double rate = std::log2(1.0 + snr_scale * std::exp(phi));
                    outcomes[s].convergence.push_back({static_cast<int>(t), seeds[s], phi, rate});
                }
                outcomes[s].rows.push_back({0.0, rca.run.scheme, seeds[s], rca.run.rate_bps_hz,
                                            rca.run.iterations, rca.run.wall_ms});
            });
            break;
        }
        case Sweep::beampattern: {
            std::vector<double> grid_rad;
            for (int deg = -180; deg <= 180; ++deg) grid_rad.push_back(deg * numerics::kPi / 180.0);
            parallel_for_index(num_seeds, [&](int s) {
                const auto ch = generate_channel(cfg, seeds[s]);
                const auto scenario = make_scenario(cfg, ch);
                const auto rca = run_rca(cfg, scenario, seeds[s]);
                const auto rca_pattern = bf::beampattern(rca.optimized_axes, scenario, fixed_zenith, grid_rad);
                const auto fixed_pattern =
                    bf::beampattern(upright_axes(cfg.num_couplers), scenario, fixed_zenith, grid_rad);
                for (std::size_t g = 0; g < grid_rad.size(); ++g) {
                    const double deg = grid_rad[g] * 180.0 / numerics::kPi;
                    outcomes[s].beampattern.push_back({deg, kSchemeRca, seeds[s], rca_pattern[g]});
                    outcomes[s].beampattern.push_back({deg, kSchemeFixedRotation, seeds[s], fixed_pattern[g]});
                }
                outcomes[s].rows.push_back({0.0, rca.run.scheme, seeds[s], rca.run.rate_bps_hz,
                                            rca.run.iterations, rca.run.wall_ms});
            });
            break;
        }
    }

    ExperimentOutput output;
    for (const auto& outcome : outcomes) {
        output.rows.insert(output.rows.end(), outcome.rows.begin(), outcome.rows.end());
        output.convergence.insert(output.convergence.end(), outcome.convergence.begin(),
                                  outcome.convergence.end());
        output.beampattern.insert(output.beampattern.end(), outcome.beampattern.begin(),
                                  outcome.beampattern.end());
    }
    // Deterministic row order: sweep value, then scheme, then seed.
    std::stable_sort(output.rows.begin(), output.rows.end(), [](const RunRow& a, const RunRow& b) {
        if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
        if (a.scheme != b.scheme) return a.scheme < b.scheme;
        return a.seed < b.seed;
    });

    std::ostringstream data;
    data << "sweep_value,scheme,seed,rate_bps_hz,iterations\n";
    std::ostringstream timing;
    timing << "sweep_value,scheme,seed,wall_ms\n";
    for (const auto& row : output.rows) {
        data << detail::format_double(row.sweep_value) << ',' << row.scheme << ',' << row.seed
             << ',' << detail::format_double(row.rate_bps_hz) << ',' << row.iterations << '\n';
        timing << detail::format_double(row.sweep_value) << ',' << row.scheme << ',' << row.seed
               << ',' << detail::format_double(row.wall_ms) << '\n';
    }
    detail::write_text_file(out_dir / "data.csv", data.str());
    output.files_written.push_back("data.csv");
    detail::write_text_file(out_dir / "timings.csv", timing.str());
    output.files_written.push_back("timings.csv");

    if (!output.convergence.empty()) {
        std::ostringstream conv;
        conv << "iteration,scheme,seed,objective,rate_bps_hz\n";
        for (const auto& row : output.convergence) {
            conv << row.iteration << ',' << kSchemeRca << ',' << row.seed << ','
                 << detail::format_double(row.objective) << ','
                 << detail::format_double(row.rate_bps_hz) << '\n';
        }
        detail::write_text_file(out_dir / "convergence.csv", conv.str());
        output.files_written.push_back("convergence.csv");
    }
    if (!output.beampattern.empty()) {
        std::ostringstream pattern;
        pattern << "phi_deg,scheme,seed,gain_db\n";
        for (const auto& row : output.beampattern) {
            pattern << detail::format_double(row.phi_deg) << ',' << row.scheme << ',' << row.seed
                    << ',' << detail::format_double(row.gain_db) << '\n';
        }
        detail::write_text_file(out_dir / "beampattern.csv", pattern.str());
        output.files_written.push_back("beampattern.csv");
    }

    nlohmann::json manifest;
    manifest["library_version"] = kLibraryVersion;
    manifest["sweep"] = sweep_name(sweep);
    manifest["seeds"] = seeds;
    manifest["config_text"] = serialize_config(cfg);
    manifest["outputs"] = output.files_written;
    detail::write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
    output.files_written.push_back("manifest.json");
    return output;
}

} // namespace rca::harness
