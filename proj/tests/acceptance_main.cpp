// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one pass/fail line per criterion, tolerances pinned in
// code. Heavy scenario banks are shared between criteria and fan out across
// hardware threads; results stay deterministic per seed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rca/harness.hpp"

#include "oracles.hpp"

namespace {

using namespace rca;
using harness::SystemConfig;
using geom::AxisMatrix;
using geom::SphericalCap;
using geom::Vec3;
using rca::numerics::kPi;

int g_failures = 0;

// Debug aid: RCA_ACCEPT_ONLY="1,4,12" runs a subset. ctest runs everything.
bool criterion_selected(int index) {
    const char* filter = std::getenv("RCA_ACCEPT_ONLY");
    if (filter == nullptr || *filter == '\0') return true;
    std::stringstream list(filter);
    std::string token;
    while (std::getline(list, token, ',')) {
        if (!token.empty() && std::stoi(token) == index) return true;
    }
    return false;
}

void criterion(int index, const std::string& name, const std::function<bool(std::string&)>& body) {
    if (!criterion_selected(index)) return;
    std::string detail;
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    try {
        ok = body(detail);
    } catch (const std::exception& e) {
        detail = std::string("exception: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] criterion %2d: %s (%s; %.1f s)\n", ok ? "PASS" : "FAIL", index, name.c_str(),
                detail.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++g_failures;
}

std::mt19937_64 g_rng(0xacce97a9ce5eedull);

Vec3 random_unit() {
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    while (true) {
        Vec3 v(unit(g_rng), unit(g_rng), unit(g_rng));
        const double n = v.norm();
        if (n > 1e-3 && n <= 1.0) return v / n;
    }
}

// ---------------------------------------------------------------------------
// Shared scenario banks.

struct SeedRun {
    double rca_rate = 0.0;
    double fixed_rate = 0.0;
    opt::OptimizationTrace trace;
    bool objective_saw_infeasible = false;
};

// Full pipeline with an instrumented objective that records whether any
// evaluation happened at an infeasible rotation matrix.
SeedRun run_instrumented(const SystemConfig& cfg, std::uint64_t seed) {
    const auto ch = harness::generate_channel(cfg, seed);
    const auto scenario = harness::make_scenario(cfg, ch);
    bf::ScenarioEvaluator eval(scenario);
    SeedRun out;
    auto objective = [&](const AxisMatrix& u) {
        if (!eval.feasible(u)) out.objective_saw_infeasible = true;
        return eval.objective(u);
    };
    out.trace = opt::optimize(objective, [&](const AxisMatrix& u) { return eval.feasible(u); },
                              harness::upright_axes(cfg.num_couplers), scenario.cap,
                              cfg.optimizer, rng::derive_stream(seed, harness::kOptimizerStream));
    const double snr_scale = scenario.transmit_power_w / scenario.noise_power_w;
    out.rca_rate = std::log2(1.0 + snr_scale * std::exp(out.trace.best_objective));
    out.fixed_rate = harness::run_fixed_rotation(cfg, scenario).rate_bps_hz;
    return out;
}

std::vector<double> scheme_means(const SystemConfig& cfg, int num_seeds) {
    // mean rate per scheme: [rca, fixed, active, flexible]
    std::vector<double> rca(num_seeds), fixed(num_seeds), active(num_seeds), flexible(num_seeds);
    harness::parallel_for_index(num_seeds, [&](int s) {
        const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(s);
        const auto ch = harness::generate_channel(cfg, seed);
        const auto scenario = harness::make_scenario(cfg, ch);
        rca[s] = harness::run_rca(cfg, scenario, seed).run.rate_bps_hz;
        fixed[s] = harness::run_fixed_rotation(cfg, scenario).rate_bps_hz;
        active[s] = harness::run_active_array(cfg, ch).rate_bps_hz;
        flexible[s] = harness::run_flexible_position(cfg, ch, seed).rate_bps_hz;
    });
    auto mean = [&](const std::vector<double>& v) {
        double sum = 0.0;
        for (double x : v) sum += x;
        return sum / static_cast<double>(v.size());
    };
    return {mean(rca), mean(fixed), mean(active), mean(flexible)};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    return body.str();
}

} // namespace

int main() {
    const SystemConfig table1; // paper parameter defaults
    const auto wp = harness::wire_parameters(table1);
    const double lambda = table1.wavelength();

    std::printf("acceptance suite: table-1 config, %u hardware threads\n",
                std::thread::hardware_concurrency());

    criterion(1, "half-wave self-impedance matches the classical value", [&](std::string& detail) {
        const auto z = em::self_impedance(wp);
        // Independent evaluation of the same closed form with quadrature Si/Ci.
        const double kd = wp.wavenumber * wp.dipole_length;
        const double c = numerics::kEulerMascheroni;
        const double re_oracle =
            wp.wave_impedance / (2.0 * kPi) *
            (c + std::log(kd) - oracles::ci_reference(kd) +
             0.5 * std::sin(kd) * (oracles::si_reference(2.0 * kd) - 2.0 * oracles::si_reference(kd)) +
             0.5 * std::cos(kd) *
                 (c + std::log(0.5 * kd) + oracles::ci_reference(2.0 * kd) -
                  2.0 * oracles::ci_reference(kd)));
        std::ostringstream s;
        s << "Re{z_s} = " << z.real() << " ohm, oracle " << re_oracle;
        detail = s.str();
        return std::abs(z.real() - 73.13) <= 0.10 && std::abs(re_oracle - 73.13) <= 0.10 &&
               std::abs(z.real() - re_oracle) < 1e-6;
    });

    criterion(2, "mutual impedance matches 512^2-node brute-force quadrature", [&](std::string& detail) {
        const auto oracle_rule = numerics::gauss_legendre(256);
        double worst = 0.0;
        int tested = 0;
        while (tested < 100) {
            std::uniform_real_distribution<double> spacing(0.3 * lambda, 3.0 * lambda);
            const Vec3 ci(0, 0, 0);
            const Vec3 cj(spacing(g_rng), 0, 0);
            const Vec3 ui = random_unit();
            const Vec3 uj = random_unit();
            if (geom::segment_pair_min_distance(ci, ui, cj, uj, 0.5 * wp.dipole_length) <
                2.0 * wp.dipole_radius) {
                continue;
            }
            const auto production = em::mutual_impedance(ci, ui, cj, uj, wp);
            const auto reference = oracles::mutual_impedance_reference(
                ci, ui, cj, uj, wp.wavenumber, wp.dipole_length, wp.wave_impedance, 512,
                oracle_rule.nodes, oracle_rule.weights);
            worst = std::max(worst, std::abs(production - reference) / std::abs(reference));
            ++tested;
        }
        std::ostringstream s;
        s << "worst relative deviation " << worst << " over 100 feasible pairs";
        detail = s.str();
        return worst < 1e-5;
    });

    criterion(3, "assembled transmit impedance matrix is reciprocal", [&](std::string& detail) {
        const auto scenario = harness::make_scenario(table1, harness::generate_channel(table1, 1));
        double worst_matrix = 0.0;
        double worst_kernel = 0.0;
        int tested = 0;
        while (tested < 50) {
            AxisMatrix axes(3, 3);
            for (int n = 0; n < 3; ++n) axes.col(n) = random_unit();
            if (!geom::is_feasible(axes, scenario.cap, scenario.geometry)) continue;
            const auto z = em::assemble_impedance_matrix(axes, scenario.geometry, wp);
            for (int i = 0; i < 4; ++i) {
                for (int j = i + 1; j < 4; ++j) {
                    worst_matrix = std::max(worst_matrix, std::abs(z.entries(i, j) - z.entries(j, i)) /
                                                              std::abs(z.entries(i, j)));
                    // Kernel reciprocity, both argument orders evaluated independently.
                    const auto fwd = em::mutual_impedance(i, j, axes, scenario.geometry, wp);
                    const auto rev = em::mutual_impedance(j, i, axes, scenario.geometry, wp);
                    worst_kernel = std::max(worst_kernel, std::abs(fwd - rev) / std::abs(fwd));
                }
            }
            ++tested;
        }
        std::ostringstream s;
        s << "worst relative asymmetry: matrix " << worst_matrix << ", kernel " << worst_kernel;
        detail = s.str();
        return worst_matrix < 1e-8 && worst_kernel < 1e-8;
    });

    criterion(4, "linear oracle dominates dense cap sampling", [&](std::string& detail) {
        double worst_slack = 0.0;
        for (double theta : {kPi / 6.0, kPi / 3.0, kPi}) {
            const SphericalCap cap(theta);
            std::vector<Vec3> samples(100000);
            std::uniform_real_distribution<double> z_dist(cap.c_theta, 1.0);
            std::uniform_real_distribution<double> a_dist(-kPi, kPi);
            for (auto& x : samples) {
                const double z = z_dist(g_rng);
                const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                const double a = a_dist(g_rng);
                x = Vec3(r * std::cos(a), r * std::sin(a), z);
            }
            for (int trial = 0; trial < 1000; ++trial) {
                const Vec3 q = random_unit() * (1.0 + (trial % 9));
                const Vec3 s = opt::linear_oracle(q, Vec3(0, 0, 1), cap);
                if (!cap.contains(s)) return false;
                const double oracle_value = q.dot(s);
                for (const auto& x : samples) {
                    worst_slack = std::max(worst_slack, q.dot(x) - oracle_value);
                }
            }
        }
        std::ostringstream s;
        s << "worst sample-minus-oracle slack " << worst_slack;
        detail = s.str();
        return worst_slack < 1e-10;
    });

    criterion(5, "segment distance matches 2001^2 grid brute force", [&](std::string& detail) {
        const double dipole = wp.dipole_length;
        const double half = 0.5 * dipole;
        const int pairs = 200;
        struct Pair { Vec3 pi, ui, pj, uj; };
        std::vector<Pair> cases(pairs);
        std::uniform_real_distribution<double> pos(-2.0 * dipole, 2.0 * dipole);
        for (auto& c : cases) {
            c = {Vec3(pos(g_rng), pos(g_rng), pos(g_rng)), random_unit(),
                 Vec3(pos(g_rng), pos(g_rng), pos(g_rng)), random_unit()};
        }
        std::vector<double> gaps(pairs);
        harness::parallel_for_index(pairs, [&](int i) {
            const auto& c = cases[i];
            const double exact = geom::segment_pair_min_distance(c.pi, c.ui, c.pj, c.uj, half);
            const double grid = oracles::segment_distance_grid(c.pi, c.ui, c.pj, c.uj, half, 2001);
            // Grid minimum can only overestimate; flag both directions.
            gaps[i] = std::max(grid - exact, exact - grid - 1e-12);
        });
        double worst = 0.0;
        for (double g : gaps) worst = std::max(worst, g);
        std::ostringstream s;
        s << "worst |closed form - grid| " << worst << " (tolerance " << dipole / 1000.0 << ")";
        detail = s.str();
        return worst <= dipole / 1000.0;
    });

    // Bank A: Table-I scenarios at N = 3 (seeds 1..200, traces kept).
    std::vector<SeedRun> bank_a;
    if (criterion_selected(6) || criterion_selected(7) || criterion_selected(8)) {
        std::printf("... building bank A (200 seeded scenarios, N=3)\n");
        std::fflush(stdout);
        bank_a.resize(200);
        harness::parallel_for_index(200, [&](int s) {
            bank_a[s] = run_instrumented(table1, table1.rng_seed + static_cast<std::uint64_t>(s));
        });
    }

    criterion(6, "refinement is feasible and monotone on 50 seeded scenarios", [&](std::string& detail) {
        double worst_gap = 0.0;
        for (int s = 0; s < 50; ++s) {
            const auto& run = bank_a[s];
            if (run.objective_saw_infeasible) {
                detail = "objective evaluated at an infeasible matrix";
                return false;
            }
            const auto& iters = run.trace.iterations;
            for (std::size_t t = 1; t < iters.size(); ++t) {
                if (!(iters[t].objective >= iters[t - 1].objective)) {
                    detail = "objective decreased at an accepted step";
                    return false;
                }
                worst_gap = std::min(worst_gap, iters[t].gap);
            }
        }
        std::ostringstream out;
        out << "50 traces monotone; most negative gap " << worst_gap;
        detail = out.str();
        return worst_gap >= -1e-12;
    });

    criterion(7, "optimized rotations never trail the fixed-rotation baseline", [&](std::string& detail) {
        int wins = 0;
        for (const auto& run : bank_a) {
            if (run.rca_rate >= run.fixed_rate) ++wins;
        }
        std::ostringstream out;
        out << wins << "/200 seeds with rca >= fixed-rotation";
        detail = out.str();
        return wins == 200;
    });

    // Bank B: N = 5 scenarios for the convergence/mean comparison.
    std::vector<SeedRun> bank_b;
    if (criterion_selected(8)) {
        std::printf("... building bank B (100 seeded scenarios, N=5)\n");
        std::fflush(stdout);
        SystemConfig n5 = table1;
        n5.num_couplers = 5;
        bank_b.resize(100);
        harness::parallel_for_index(100, [&](int s) {
            bank_b[s] = run_instrumented(n5, n5.rng_seed + static_cast<std::uint64_t>(s));
        });
    }

    criterion(8, "convergence within 200 iterations and N=5 above N=3", [&](std::string& detail) {
        int converged = 0;
        for (int s = 0; s < 100; ++s) {
            const auto& trace = bank_a[s].trace;
            const bool rate_trace_monotone = [&]() {
                for (std::size_t t = 1; t < trace.iterations.size(); ++t) {
                    if (trace.iterations[t].objective < trace.iterations[t - 1].objective) return false;
                }
                return true;
            }();
            const bool stopped_converged = trace.stop == opt::StopReason::converged ||
                                           trace.stop == opt::StopReason::stationary_gap;
            if (rate_trace_monotone && stopped_converged &&
                trace.accepted_steps() <= table1.optimizer.max_iterations) {
                ++converged;
            }
        }
        double mean3 = 0.0;
        double mean5 = 0.0;
        for (int s = 0; s < 100; ++s) {
            mean3 += bank_a[s].rca_rate;
            mean5 += bank_b[s].rca_rate;
        }
        mean3 /= 100.0;
        mean5 /= 100.0;
        std::ostringstream out;
        out << converged << "/100 converged; mean rate N=5 " << mean5 << " vs N=3 " << mean3;
        detail = out.str();
        return converged >= 95 && mean5 >= mean3;
    });

    criterion(9, "mean rate grows with coupler count and rotation range", [&](std::string& detail) {
        const int seeds = 100;
        std::vector<double> mean_by_n(7, 0.0);
        for (int n = 1; n <= 6; ++n) {
            SystemConfig cfg = table1;
            cfg.num_couplers = n;
            std::vector<double> rates(seeds);
            harness::parallel_for_index(seeds, [&](int s) {
                const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(s);
                const auto ch = harness::generate_channel(cfg, seed);
                const auto scenario = harness::make_scenario(cfg, ch);
                rates[s] = harness::run_rca(cfg, scenario, seed).run.rate_bps_hz;
            });
            for (double r : rates) mean_by_n[n] += r;
            mean_by_n[n] /= seeds;
        }
        bool monotone = true;
        for (int n = 2; n <= 6; ++n) {
            if (mean_by_n[n] < mean_by_n[n - 1] - 0.05) monotone = false;
        }
        auto theta_mean = [&](double degrees) {
            SystemConfig cfg = table1;
            cfg.num_couplers = 6;
            cfg.theta_max_rad = degrees * kPi / 180.0;
            std::vector<double> rates(seeds);
            harness::parallel_for_index(seeds, [&](int s) {
                const std::uint64_t seed = cfg.rng_seed + static_cast<std::uint64_t>(s);
                const auto ch = harness::generate_channel(cfg, seed);
                const auto scenario = harness::make_scenario(cfg, ch);
                rates[s] = harness::run_rca(cfg, scenario, seed).run.rate_bps_hz;
            });
            double m = 0.0;
            for (double r : rates) m += r;
            return m / seeds;
        };
        const double wide = theta_mean(175.0);
        const double narrow = theta_mean(60.0);
        std::ostringstream out;
        out << "means N=1..6:";
        for (int n = 1; n <= 6; ++n) out << ' ' << mean_by_n[n];
        out << "; theta 175deg " << wide << " vs 60deg " << narrow;
        detail = out.str();
        return monotone && wide >= narrow;
    });

    criterion(10, "rates grow with path count and rca leads every baseline", [&](std::string& detail) {
        const int seeds = 100;
        std::vector<std::vector<double>> means(13); // [L] -> {rca, fixed, active, flexible}
        for (int paths = 1; paths <= 12; ++paths) {
            SystemConfig cfg = table1;
            cfg.num_couplers = 2;
            cfg.num_paths = paths;
            means[paths] = scheme_means(cfg, seeds);
        }
        bool rca_leads = true;
        for (int paths = 1; paths <= 12; ++paths) {
            for (int scheme = 1; scheme < 4; ++scheme) {
                if (means[paths][0] < means[paths][scheme]) rca_leads = false;
            }
        }
        bool growing = true;
        for (int paths = 2; paths <= 6; ++paths) {
            for (int scheme = 0; scheme < 4; ++scheme) {
                if (means[paths][scheme] < means[paths - 1][scheme] - 0.05) growing = false;
            }
        }
        std::ostringstream out;
        out << "rca means L=1..12:";
        for (int paths = 1; paths <= 12; ++paths) out << ' ' << means[paths][0];
        out << (rca_leads ? "; rca leads all baselines" : "; rca trails a baseline");
        detail = out.str();
        return rca_leads && growing;
    });

    criterion(11, "central finite differences are second-order accurate", [&](std::string& detail) {
        const SphericalCap sphere(kPi);
        const Vec3 direction(0.45, -0.65, 0.3);
        AxisMatrix base(3, 1);
        base.col(0) = Vec3(0.35, 0.45, 0.82).normalized();
        auto objective = [&](const AxisMatrix& u) { return direction.dot(u.col(0)); };
        auto feasible = [](const AxisMatrix&) { return true; };
        const Vec3 exact = opt::project_tangent(base.col(0), direction);
        std::vector<double> errors;
        for (double eps : {1e-2, 1e-3, 1e-4}) {
            const Vec3 estimate = opt::fd_gradient(objective, feasible, base, 0,
                                                   direction.dot(base.col(0)), sphere, eps);
            errors.push_back((opt::project_tangent(base.col(0), estimate) - exact).norm());
        }
        const double slope = std::log(errors[0] / errors[2]) / std::log(1e-2 / 1e-4);
        std::ostringstream out;
        out << "log-log slope " << slope << " (errors";
        for (double e : errors) out << ' ' << e;
        out << ")";
        detail = out.str();
        return std::abs(slope - 2.0) <= 0.3;
    });

    criterion(12, "byte-identical outputs for identical config and seeds", [&](std::string& detail) {
        SystemConfig cfg = table1;
        cfg.num_couplers = 2;
        cfg.num_paths = 4;
        const auto dir_a = std::filesystem::path("acceptance_out") / "repro_a";
        const auto dir_b = std::filesystem::path("acceptance_out") / "repro_b";
        std::filesystem::remove_all(dir_a);
        std::filesystem::remove_all(dir_b);
        harness::run_experiment(cfg, harness::Sweep::power, 3, dir_a);
        const auto cfg_again = harness::load_config(dir_a / "manifest.json");
        harness::run_experiment(cfg_again, harness::Sweep::power, 3, dir_b);
        const bool data_same = slurp(dir_a / "data.csv") == slurp(dir_b / "data.csv");
        const bool manifest_same = slurp(dir_a / "manifest.json") == slurp(dir_b / "manifest.json");
        detail = std::string("data.csv ") + (data_same ? "identical" : "DIFFERS") +
                 ", manifest.json " + (manifest_same ? "identical" : "DIFFERS");
        return data_same && manifest_same;
    });

    std::printf("%d criterion(s) failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
