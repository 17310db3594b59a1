// SPDX-License-Identifier: Apache-2.0
//
// rca-sim: command-line front end for the rotatable coupler antenna
// simulator. `run` executes a sweep experiment, `validate` checks a
// configuration (feasibility and quadrature convergence), and `impedance`
// dumps the transmit impedance matrix for a given set of rotations.

#include <complex>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rca/harness.hpp"

namespace {

using nlohmann::json;
using namespace rca;

int cmd_run(const std::string& config_path, const std::string& sweep_name, int seeds,
            const std::string& out_dir) {
    const auto cfg = harness::load_config(config_path);
    const auto sweep = harness::parse_sweep(sweep_name);
    const auto output = harness::run_experiment(cfg, sweep, seeds, out_dir);
    std::printf("wrote %zu rows to %s\n", output.rows.size(), out_dir.c_str());
    for (const auto& file : output.files_written) {
        std::printf("  %s/%s\n", out_dir.c_str(), file.c_str());
    }
    return 0;
}

int cmd_validate(const std::string& config_path) {
    int failures = 0;
    auto report = [&](bool ok, const std::string& what) {
        std::printf("[%s] %s\n", ok ? " ok " : "FAIL", what.c_str());
        if (!ok) ++failures;
    };

    harness::SystemConfig cfg;
    try {
        cfg = harness::load_config(config_path);
        report(true, "config parses and validates");
    } catch (const std::exception& e) {
        report(false, std::string("config: ") + e.what());
        return 1;
    }

    const auto scenario = harness::make_scenario(cfg, harness::generate_channel(cfg, cfg.rng_seed));
    const auto upright = harness::upright_axes(cfg.num_couplers);
    const bool upright_ok = geom::is_feasible(upright, scenario.cap, scenario.geometry);
    report(upright_ok, "upright fallback configuration is feasible");

    // Quadrature convergence certificate on the fallback rotation and on a
    // handful of rotated feasible samples from the codebook.
    double worst = 0.0;
    if (cfg.num_couplers > 0) {
        auto check = [&](const geom::AxisMatrix& axes) {
            const auto cert = em::certify_quadrature(axes, scenario.geometry, scenario.wire,
                                                     cfg.quadrature_order);
            worst = std::max(worst, cert.max_relative_change);
        };
        if (upright_ok) check(upright);
        const auto cb = opt::build_codebook(scenario.cap, 64);
        std::mt19937_64 gen(rng::derive_stream(cfg.rng_seed, 0xce7f));
        int sampled = 0;
        for (int attempt = 0; attempt < 200 && sampled < 6; ++attempt) {
            geom::AxisMatrix axes(3, cfg.num_couplers);
            for (int n = 0; n < cfg.num_couplers; ++n) {
                axes.col(n) = cb.codewords[gen() % cb.codewords.size()];
            }
            if (!geom::is_feasible(axes, scenario.cap, scenario.geometry)) continue;
            check(axes);
            ++sampled;
        }
        std::ostringstream what;
        what << "mutual-impedance quadrature converged at order " << cfg.quadrature_order
             << " (worst doubling change " << worst << ")";
        report(worst < 1e-6, what.str());
    }

    try {
        const auto z = em::assemble_impedance_matrix(upright, scenario.geometry, scenario.wire,
                                                     cfg.quadrature_order);
        const auto sol = bf::solve_beamforming(z, scenario.loads);
        report(true, "coupler load system solves (residual within tolerance)");
        bf::transmit_power_quadratic(z, sol.port_weights);
        report(true, "radiated power positive at the fallback rotation");
    } catch (const std::exception& e) {
        report(false, std::string("beamforming: ") + e.what());
    }

    std::printf("%s\n", failures == 0 ? "validation passed" : "validation FAILED");
    return failures == 0 ? 0 : 1;
}

int cmd_impedance(const std::string& geometry_path, const std::string& out_path) {
    std::ifstream in(geometry_path);
    if (!in) {
        std::fprintf(stderr, "cannot open geometry file: %s\n", geometry_path.c_str());
        return 1;
    }
    json request = json::parse(in);
    harness::SystemConfig cfg;
    if (request.contains("config_text")) {
        cfg = harness::parse_config_text(request["config_text"].get<std::string>());
    }
    if (!request.contains("axes") || !request["axes"].is_array()) {
        std::fprintf(stderr, "geometry file needs an 'axes' array of [x,y,z] unit vectors\n");
        return 1;
    }
    const auto& axes_json = request["axes"];
    cfg.num_couplers = static_cast<int>(axes_json.size());
    geom::AxisMatrix axes(3, cfg.num_couplers);
    for (int n = 0; n < cfg.num_couplers; ++n) {
        const auto& entry = axes_json[n];
        if (!entry.is_array() || entry.size() != 3) {
            std::fprintf(stderr, "axes[%d] must have three components\n", n);
            return 1;
        }
        axes.col(n) = geom::Vec3(entry[0].get<double>(), entry[1].get<double>(),
                                 entry[2].get<double>());
        const double norm = axes.col(n).norm();
        if (std::abs(norm - 1.0) > 1e-9) {
            std::fprintf(stderr, "axes[%d] is not a unit vector (norm %.12g)\n", n, norm);
            return 1;
        }
    }

    const auto wp = harness::wire_parameters(cfg);
    const auto geometry = geom::ElementGeometry::linear_array(
        cfg.num_couplers, cfg.coupler_spacing(), wp.dipole_length, wp.dipole_radius);
    const auto cap = geom::SphericalCap(cfg.theta_max_rad);
    if (!geom::is_feasible(axes, cap, geometry)) {
        std::fprintf(stderr, "requested rotations are infeasible for this geometry\n");
        return 1;
    }
    const auto z = em::assemble_impedance_matrix(axes, geometry, wp, cfg.quadrature_order);

    json out;
    out["num_elements"] = cfg.num_couplers + 1;
    out["self_impedance_ohm"] = {z.self_term().real(), z.self_term().imag()};
    json rows = json::array();
    for (int i = 0; i < z.entries.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < z.entries.cols(); ++j) {
            row.push_back({z.entries(i, j).real(), z.entries(i, j).imag()});
        }
        rows.push_back(row);
    }
    out["impedance_matrix_ohm"] = rows;
    const std::string body = out.dump(2) + "\n";
    if (out_path.empty()) {
        std::fputs(body.c_str(), stdout);
    } else {
        std::ofstream file(out_path, std::ios::binary);
        if (!file) {
            std::fprintf(stderr, "cannot open output file: %s\n", out_path.c_str());
            return 1;
        }
        file << body;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rotatable coupler antenna simulator"};
    app.require_subcommand(1);

    std::string config_path;
    std::string sweep_name;
    int seeds = 10;
    std::string out_dir = "out";
    auto* run = app.add_subcommand("run", "run a sweep experiment and write CSV outputs");
    run->add_option("--config", config_path, "config file (key = value, or a manifest.json)")
        ->required();
    run->add_option("--sweep", sweep_name, "power|N|L|theta_max|convergence|beampattern")
        ->required();
    run->add_option("--seeds", seeds, "number of seeded scenarios")->check(CLI::PositiveNumber);
    run->add_option("--out", out_dir, "output directory")->required();

    std::string validate_config;
    auto* validate = app.add_subcommand("validate", "check a config: feasibility and quadrature");
    validate->add_option("--config", validate_config, "config file")->required();

    std::string geometry_path;
    std::string impedance_out;
    auto* impedance = app.add_subcommand("impedance", "dump Z_TX for given rotations (JSON)");
    impedance->add_option("--geometry", geometry_path,
                          "JSON file with 'axes' (and optional 'config_text')")->required();
    impedance->add_option("--out", impedance_out, "output JSON path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, sweep_name, seeds, out_dir);
        if (validate->parsed()) return cmd_validate(validate_config);
        if (impedance->parsed()) return cmd_impedance(geometry_path, impedance_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
