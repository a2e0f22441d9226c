// swimsim command-line tool. Exit codes: 0 success, 1 numerical failure,
// 2 usage or configuration error. Any failure after the output directory is
// known leaves a FAILED file there with the message.

#include "swimsim/config.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

using namespace swimsim;

namespace {

struct Overrides {
    std::string config;
    std::string output_dir;
    std::optional<double> edge_length, spine_refinement, dt, solver_tol;
    std::optional<int> threads, max_iterations;
    std::optional<std::uint64_t> seed;
    bool stiff_head = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "Experiment config JSON");
    cmd->add_option("-o,--output-dir", o.output_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--edge-length", o.edge_length, "mesh.edge_length [m]");
    cmd->add_option("--spine-refinement", o.spine_refinement, "mesh.spine_refinement");
    cmd->add_option("--dt", o.dt, "sim.dt [s]");
    cmd->add_option("--solver-tol", o.solver_tol, "sim.solver_tol");
    cmd->add_flag("--stiff-head", o.stiff_head, "sim.stiff_head = true");
    cmd->add_option("--threads", o.threads, "optimizer.threads");
    cmd->add_option("--max-iterations", o.max_iterations, "optimizer.max_iterations");
    cmd->add_option("--seed", o.seed, "seed");
}

// Config file first, then flags.
ExperimentConfig resolve_config(const Overrides& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (!o.output_dir.empty()) cfg.output_dir = o.output_dir;
    if (o.edge_length) cfg.mesh.edge_length = *o.edge_length;
    if (o.spine_refinement) cfg.mesh.spine_refinement = *o.spine_refinement;
    if (o.dt) cfg.sim.dt = *o.dt;
    if (o.solver_tol) cfg.sim.solver_tol = *o.solver_tol;
    if (o.stiff_head) cfg.stiff_head = true;
    if (o.threads) cfg.optimizer.threads = *o.threads;
    if (o.max_iterations) cfg.optimizer.max_iterations = *o.max_iterations;
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    return cfg;
}

void write_json(const fs::path& path, const Json& j) { write_text_file(path, dump_json(j)); }

template <class Fn>
void write_stream(const fs::path& path, Fn&& fn) {
    std::ostringstream os;
    fn(os);
    write_text_file(path, os.str());
}

const Dataset& find_dataset(const std::vector<Dataset>& all, const std::string& id) {
    for (const auto& d : all)
        if (d.id == id) return d;
    throw InputError("no dataset with id '" + id + "'");
}

// ---- mesh

int cmd_mesh(const ExperimentConfig& cfg) {
    SwimmerMesh mesh = build_mesh(cfg);
    const fs::path out = cfg.output_dir;
    save_mesh_text(out / "mesh.txt", mesh);
    write_json(out / "mesh.json", mesh_to_json(mesh));
    Json stats = {{"num_vertices", mesh.num_vertices()},
                  {"num_triangles", mesh.num_triangles()},
                  {"spine_error_m", spine_labeling_error(mesh, cfg.profile)},
                  {"area_m2", mesh_area(mesh)},
                  {"analytic_area_m2", domain_area(cfg.profile)},
                  {"edge_length_m", cfg.mesh.edge_length},
                  {"spine_refinement", cfg.mesh.spine_refinement}};
    write_json(out / "mesh_stats.json", stats);
    std::cout << stats.dump(2) << "\n";
    return 0;
}

// ---- simulate

struct SimulateArgs {
    std::optional<double> amplitude, slope, frequency, duration, voltage;
    double smoothing = 0.0;
    std::string trajectory = "csv";
};

int cmd_simulate(const ExperimentConfig& cfg, const SimulateArgs& a) {
    ActuationParams act = cfg.actuation;
    if (a.voltage) act.amplitude = interpolate_amplitude(*a.voltage, cfg.amplitude_table).amplitude;
    if (a.amplitude) act.amplitude = *a.amplitude;
    if (a.slope) act.slope = *a.slope;
    if (a.frequency) act.frequency = *a.frequency;
    act.validate();
    const double duration = a.duration.value_or(2.0 * act.period());
    if (!(duration > 0.0)) throw InputError("duration must be positive");
    if (!(a.smoothing >= 0.0)) throw InputError("smoothing must be non-negative");

    SwimmerMesh mesh = build_mesh(cfg);
    std::vector<StepReport> reports;
    auto traj = simulate(mesh, cfg.effective_sim(), act, duration, a.smoothing, &reports);

    const fs::path out = cfg.output_dir;
    if (a.trajectory == "csv" || a.trajectory == "both")
        write_stream(out / "trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
    if (a.trajectory == "binary" || a.trajectory == "both")
        write_stream(out / "trajectory.bin", [&](std::ostream& os) { write_trajectory_binary(os, traj); });

    std::vector<double> times;
    for (const auto& s : traj) times.push_back(s.t);
    AngleTrace angle = simulated_angle_trace(traj, choose_keypoints(mesh), times);
    write_stream(out / "angle.csv", [&](std::ostream& os) { write_angle_csv(os, angle); });

    int newton = 0, regularized = 0;
    double max_res = 0.0;
    for (const auto& r : reports) {
        newton += r.newton_iterations;
        regularized += r.used_regularized_hessian ? 1 : 0;
        max_res = std::max(max_res, r.residual);
    }
    Json stats = {{"steps", static_cast<int>(reports.size())},
                  {"frames", static_cast<int>(traj.size())},
                  {"num_vertices", mesh.num_vertices()},
                  {"newton_iterations", newton},
                  {"regularized_steps", regularized},
                  {"max_scaled_residual", max_res},
                  {"amplitude", act.amplitude},
                  {"slope", act.slope},
                  {"frequency_hz", act.frequency},
                  {"duration_s", duration}};
    write_json(out / "simulate_stats.json", stats);
    std::cout << stats.dump(2) << "\n";
    return 0;
}

// ---- gradient check

struct CheckArgs {
    std::optional<double> amplitude, slope;
    std::string dataset;
    int steps = 0;
};

Json run_gradient_checks(const ExperimentConfig& cfg, const SwimmerMesh& mesh, const std::vector<Dataset>& datasets,
                         double amplitude, double slope, int steps) {
    GradientRequest req;
    req.smoothing = cfg.optimizer.smoothing;
    req.checkpoint_every = cfg.optimizer.checkpoint_every;
    const SimConfig sim = cfg.effective_sim();
    const Keypoints kp = choose_keypoints(mesh);
    Json rows = Json::array();
    double worst = 0.0;
    for (const auto& ds : datasets) {
        AngleTrace target = ds.trace;
        if (steps > 0) {
            AngleTrace cut;
            for (std::size_t k = 0; k < target.size(); ++k)
                if (target.timestamps[k] <= steps * sim.dt + 1e-12) {
                    cut.timestamps.push_back(target.timestamps[k]);
                    cut.sin_theta.push_back(target.sin_theta[k]);
                }
            if (cut.size() == 0) throw InputError("dataset '" + ds.id + "': no samples within the first steps");
            target = cut;
        }
        ActuationParams act = cfg.actuation;
        act.amplitude = amplitude;
        act.slope = slope;
        act.frequency = ds.frequency;
        GradientCheck chk;
        try {
            chk = check_gradient(mesh, sim, act, kp, target, req);
        } catch (const NumericalError& e) {
            throw NumericalError("dataset '" + ds.id + "': " + e.what());
        }
        Json row = gradient_check_to_json(chk);
        row["id"] = ds.id;
        row["amplitude_value"] = amplitude;
        row["slope_value"] = slope;
        rows.push_back(row);
        worst = std::max({worst, chk.amplitude.relative_error, chk.slope.relative_error});
        std::cerr << "check-grad " << ds.id << ": rel err A " << sci(chk.amplitude.relative_error) << ", s "
                  << sci(chk.slope.relative_error) << "\n";
    }
    return {{"num_vertices", mesh.num_vertices()}, {"checks", rows}, {"max_relative_error", worst}};
}

double default_slope(const ExperimentConfig& cfg, const std::vector<Dataset>& datasets) {
    if (cfg.optimizer.init_slope > 0.0) return cfg.optimizer.init_slope;
    double f_max = 0.0;
    for (const auto& d : datasets) f_max = std::max(f_max, d.frequency);
    return 4.0 * f_max;
}

int cmd_check_grad(const ExperimentConfig& cfg, const CheckArgs& a) {
    if (cfg.datasets.empty()) throw InputError("check-grad: the config lists no datasets");
    auto datasets = load_datasets(cfg.datasets);
    if (!a.dataset.empty()) datasets = {find_dataset(datasets, a.dataset)};
    SwimmerMesh mesh = build_mesh(cfg);
    Json report = run_gradient_checks(cfg, mesh, datasets, a.amplitude.value_or(cfg.optimizer.init_amplitude),
                                      a.slope.value_or(default_slope(cfg, datasets)), a.steps);
    write_json(fs::path(cfg.output_dir) / "grad_check.json", report);
    std::cout << report.dump(2) << "\n";
    return 0;
}

// ---- identify

int cmd_identify(const ExperimentConfig& cfg, bool check_grad, int check_steps) {
    if (cfg.datasets.empty()) throw InputError("identify: the config lists no datasets");
    auto datasets = load_datasets(cfg.datasets);
    SwimmerMesh mesh = build_mesh(cfg);
    const fs::path out = cfg.output_dir;
    if (check_grad) {
        Json report = run_gradient_checks(cfg, mesh, datasets, cfg.optimizer.init_amplitude,
                                          default_slope(cfg, datasets), check_steps);
        write_json(out / "grad_check.json", report);
    }
    FitResult fit = identify(datasets, mesh, cfg.effective_sim(), cfg.actuation, cfg.optimizer,
                             [](const IterationRecord& r) {
                                 std::cerr << "iter " << r.iteration << " loss " << sci(r.loss) << " slope "
                                           << r.slope << " |g| " << sci(r.grad_norm) << "\n";
                             });
    write_json(out / "fit.json", fit_to_json(fit, config_hash(cfg)));
    write_stream(out / "iterations.csv", [&](std::ostream& os) {
        os << "iteration,loss,grad_norm,slope";
        for (const auto& [v, a] : fit.amplitude_table.entries) os << ",amplitude_" << v;
        os << "\n";
        char buf[128];
        for (const auto& r : fit.log) {
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g", r.iteration, r.loss, r.grad_norm, r.slope);
            os << buf;
            for (double a : r.amplitudes) {
                std::snprintf(buf, sizeof buf, ",%.17g", a);
                os << buf;
            }
            os << "\n";
        }
    });
    std::cout << "slope " << fit.slope << "\n";
    for (const auto& [v, a] : fit.amplitude_table.entries) std::cout << "amplitude @ " << v << " V: " << a << "\n";
    std::cout << "train MAE " << fit.train_mae << " after " << fit.iterations << " iterations\n";
    return 0;
}

// ---- validate

int cmd_validate(const ExperimentConfig& cfg, const std::string& fit_path) {
    FitResult fit = load_fit(fit_path);
    const auto& specs = cfg.validation_datasets.empty() ? cfg.datasets : cfg.validation_datasets;
    if (specs.empty()) throw InputError("validate: the config lists no datasets");
    auto datasets = load_datasets(specs);
    SwimmerMesh mesh = build_mesh(cfg);
    ValidationReport report = validate(fit, datasets, mesh, cfg.effective_sim(), cfg.actuation);
    const fs::path out = cfg.output_dir;
    write_json(out / "validation.json", validation_to_json(report));
    for (std::size_t i = 0; i < datasets.size(); ++i)
        write_stream(out / "validation" / (datasets[i].id + ".csv"),
                     [&](std::ostream& os) { write_angle_csv(os, report.simulated[i]); });
    for (const auto& e : report.per_dataset)
        std::cout << e.id << " (" << e.voltage << " V, " << e.frequency << " Hz): MAE " << e.mae << "\n";
    std::cout << "aggregate MAE " << report.aggregate_mae << "\n";
    return 0;
}

// ---- synthesize

struct SynthArgs {
    std::vector<double> voltages, amplitudes, frequencies;
    double slope = 8.0;
    double noise = 0.0;
    double sample_rate = 120.0;
};

int cmd_synthesize(const ExperimentConfig& cfg, const SynthArgs& a) {
    if (a.voltages.size() != a.amplitudes.size() || a.voltages.empty())
        throw InputError("synthesize: --voltages and --amplitudes need the same, nonzero length");
    if (a.frequencies.empty()) throw InputError("synthesize: --frequencies is empty");
    if (!(a.noise >= 0.0)) throw InputError("synthesize: noise must be non-negative");
    SwimmerMesh mesh = build_mesh(cfg);
    const SimConfig sim = cfg.effective_sim();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const fs::path out = cfg.output_dir;
    Json list = Json::array();
    for (std::size_t i = 0; i < a.voltages.size(); ++i)
        for (double f : a.frequencies) {
            ActuationParams act = cfg.actuation;
            act.amplitude = a.amplitudes[i];
            act.slope = a.slope;
            act.frequency = f;
            act.validate();
            char id[64];
            std::snprintf(id, sizeof id, "v%g_f%g", a.voltages[i], f);
            Dataset ds = synthesize_dataset(id, mesh, sim, act, a.voltages[i], a.sample_rate);
            if (a.noise > 0.0)
                for (double& s : ds.trace.sin_theta) s = std::clamp(s + a.noise * gauss(rng), -1.0, 1.0);
            const std::string csv = std::string(id) + ".csv", meta = std::string(id) + ".json";
            write_stream(out / csv, [&](std::ostream& os) { write_angle_csv(os, ds.trace); });
            write_json(out / meta, metadata_to_json({a.voltages[i], f}));
            list.push_back({{"id", id}, {"angle_csv", csv}, {"metadata", meta}});
            std::cerr << "wrote " << (out / csv).string() << "\n";
        }
    write_json(out / "datasets.json", list);
    return 0;
}

void write_failure(const fs::path& dir, const std::string& msg) {
    if (dir.empty()) return;
    try {
        fs::create_directories(dir);
        std::ofstream(dir / "FAILED") << msg << "\n";
    } catch (...) {
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"swimsim: 2D FEM soft swimmer simulation and system identification"};
    app.require_subcommand(1);

    Overrides o;
    auto* mesh_cmd = app.add_subcommand("mesh", "Generate the swimmer mesh and report statistics");
    add_common(mesh_cmd, o);

    SimulateArgs sa;
    auto* sim_cmd = app.add_subcommand("simulate", "Simulate the swimmer and emit trajectory and angle CSV");
    add_common(sim_cmd, o);
    sim_cmd->add_option("--amplitude", sa.amplitude, "Activation amplitude A");
    sim_cmd->add_option("--slope", sa.slope, "Activation slope [1/s]");
    sim_cmd->add_option("--frequency", sa.frequency, "Drive frequency [Hz]");
    sim_cmd->add_option("--voltage", sa.voltage, "Take the amplitude from the config amplitude table");
    sim_cmd->add_option("--duration", sa.duration, "Simulated time [s] (default two periods)");
    sim_cmd->add_option("--smoothing", sa.smoothing, "Activation kink smoothing (fraction of a period)");
    sim_cmd->add_option("--trajectory", sa.trajectory, "Trajectory output")
        ->check(CLI::IsMember({"csv", "binary", "both", "none"}));

    bool check_grad = false;
    int check_steps = 0;
    auto* id_cmd = app.add_subcommand("identify", "Fit amplitudes and slope to the configured datasets");
    add_common(id_cmd, o);
    id_cmd->add_flag("--check-grad", check_grad, "Also write a gradient check at the initial parameters");
    id_cmd->add_option("--check-steps", check_steps, "Crop gradient-check targets to this many steps (0 = all)");

    std::string fit_path;
    auto* val_cmd = app.add_subcommand("validate", "Evaluate a fit on unseen datasets");
    add_common(val_cmd, o);
    val_cmd->add_option("--fit", fit_path, "FitResult JSON")->required();

    CheckArgs ca;
    auto* cg_cmd = app.add_subcommand("check-grad", "Compare adjoint gradients with finite differences");
    add_common(cg_cmd, o);
    cg_cmd->add_option("--amplitude", ca.amplitude, "Amplitude at which to check");
    cg_cmd->add_option("--slope", ca.slope, "Slope at which to check");
    cg_cmd->add_option("--dataset", ca.dataset, "Only this dataset id");
    cg_cmd->add_option("--steps", ca.steps, "Crop targets to this many steps (0 = all)");

    SynthArgs ya;
    auto* syn_cmd = app.add_subcommand("synthesize", "Write synthetic angle datasets from known parameters");
    add_common(syn_cmd, o);
    syn_cmd->add_option("--voltages", ya.voltages, "Voltages [V]")->required()->delimiter(',');
    syn_cmd->add_option("--amplitudes", ya.amplitudes, "Amplitude per voltage")->required()->delimiter(',');
    syn_cmd->add_option("--frequencies", ya.frequencies, "Frequencies [Hz]")->required()->delimiter(',');
    syn_cmd->add_option("--slope", ya.slope, "Activation slope [1/s]");
    syn_cmd->add_option("--noise", ya.noise, "Gaussian noise std on sin theta (seeded)");
    syn_cmd->add_option("--sample-rate", ya.sample_rate, "Samples per second");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    fs::path out_dir = o.output_dir;
    try {
        ExperimentConfig cfg = resolve_config(o);
        out_dir = cfg.output_dir;
        fs::create_directories(out_dir);
        fs::remove(out_dir / "FAILED");
        write_failure(out_dir, "running");  // replaced on success
        int rc = 0;
        if (*mesh_cmd) rc = cmd_mesh(cfg);
        else if (*sim_cmd) rc = cmd_simulate(cfg, sa);
        else if (*id_cmd) rc = cmd_identify(cfg, check_grad, check_steps);
        else if (*val_cmd) rc = cmd_validate(cfg, fit_path);
        else if (*cg_cmd) rc = cmd_check_grad(cfg, ca);
        else if (*syn_cmd) rc = cmd_synthesize(cfg, ya);
        fs::remove(out_dir / "FAILED");
        return rc;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        write_failure(out_dir, e.what());
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        write_failure(out_dir, e.what());
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        write_failure(out_dir, e.what());
        return 1;
    }
}
