#include "swimsim/sysid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <limits>
#include <thread>

namespace swimsim {

void OptimizerConfig::validate() const {
    if (!(learning_rate_amplitude > 0.0) || !(learning_rate_slope > 0.0))
        throw InputError("optimizer: learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw InputError("optimizer: beta1 and beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw InputError("optimizer: epsilon must be positive");
    if (max_iterations < 1) throw InputError("optimizer: max_iterations must be >= 1");
    if (window < 1) throw InputError("optimizer: window must be >= 1");
    if (!(rel_tol >= 0.0)) throw InputError("optimizer: rel_tol must be non-negative");
    if (!(amplitude_max > 0.0 && amplitude_max < 1.0))
        throw InputError("optimizer: amplitude_max must lie in (0, 1)");
    if (!(init_amplitude >= 0.0 && init_amplitude <= amplitude_max))
        throw InputError("optimizer: init_amplitude must lie in [0, amplitude_max]");
    if (!(slope_min > 0.0)) throw InputError("optimizer: slope_min must be positive");
    if (checkpoint_every < 1) throw InputError("optimizer: checkpoint_every must be >= 1");
    if (threads < 0) throw InputError("optimizer: threads must be >= 0");
}

ActuationParams dataset_actuation(const ActuationParams& base, const AmplitudeTable& table, double slope,
                                  const Dataset& ds) {
    ActuationParams p = base;
    p.amplitude = interpolate_amplitude(ds.voltage, table).amplitude;
    p.slope = slope;
    p.frequency = ds.frequency;
    return p;
}

namespace {

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the
// exception of the lowest failing index.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
    int workers = threads == 0 ? static_cast<int>(std::thread::hardware_concurrency()) : threads;
    workers = std::clamp(workers, 1, std::max(n, 1));
    std::vector<std::exception_ptr> errors(n);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int i = next++; i < n; i = next++) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string attribute(const Dataset& ds, const std::exception& e) {
    return "dataset '" + ds.id + "': " + e.what();
}

void check_datasets(const std::vector<Dataset>& datasets) {
    for (const auto& ds : datasets) {
        if (!(ds.frequency > 0.0)) throw InputError("dataset '" + ds.id + "': frequency must be positive");
        if (!std::isfinite(ds.voltage)) throw InputError("dataset '" + ds.id + "': voltage must be finite");
        if (ds.trace.size() == 0) throw InputError("dataset '" + ds.id + "': empty trace");
        ds.trace.validate();
    }
}

}  // namespace

FitResult identify(const std::vector<Dataset>& datasets_in, const SwimmerMesh& mesh, const SimConfig& cfg,
                   const ActuationParams& base, const OptimizerConfig& opt,
                   const std::function<void(const IterationRecord&)>& progress) {
    opt.validate();
    cfg.validate();
    if (datasets_in.empty()) throw InputError("identify: no datasets");
    check_datasets(datasets_in);

    std::vector<Dataset> datasets = datasets_in;
    std::sort(datasets.begin(), datasets.end(), [](const Dataset& a, const Dataset& b) { return a.id < b.id; });
    for (std::size_t i = 1; i < datasets.size(); ++i)
        if (datasets[i].id == datasets[i - 1].id) throw InputError("identify: duplicate dataset id '" + datasets[i].id + "'");

    std::vector<double> voltages;
    for (const auto& ds : datasets) voltages.push_back(ds.voltage);
    std::sort(voltages.begin(), voltages.end());
    voltages.erase(std::unique(voltages.begin(), voltages.end()), voltages.end());
    std::vector<int> voltage_index;
    for (const auto& ds : datasets)
        voltage_index.push_back(static_cast<int>(std::lower_bound(voltages.begin(), voltages.end(), ds.voltage) -
                                                 voltages.begin()));

    double f_max = 0.0;
    for (const auto& ds : datasets) f_max = std::max(f_max, ds.frequency);
    const double slope_scale = opt.slope_scale > 0.0 ? opt.slope_scale : 4.0 * f_max;
    const double slope_max = opt.slope_max > 0.0 ? opt.slope_max : 1.0 / cfg.dt;
    const double init_slope = opt.init_slope > 0.0 ? opt.init_slope : 4.0 * f_max;

    const Keypoints keypoints = choose_keypoints(mesh);
    const int nv = static_cast<int>(voltages.size());
    const int nd = static_cast<int>(datasets.size());

    // Optimization variables: amplitudes, then slope / slope_scale.
    std::vector<double> x(nv + 1, opt.init_amplitude);
    x[nv] = std::clamp(init_slope, opt.slope_min, slope_max) / slope_scale;
    std::vector<double> m1(nv + 1, 0.0), m2(nv + 1, 0.0);
    const std::vector<double> lr = [&] {
        std::vector<double> r(nv + 1, opt.learning_rate_amplitude);
        r[nv] = opt.learning_rate_slope;
        return r;
    }();

    auto table_of = [&](const std::vector<double>& params) {
        AmplitudeTable t;
        for (int v = 0; v < nv; ++v) t.entries.emplace_back(voltages[v], params[v]);
        return t;
    };

    GradientRequest req;
    req.smoothing = opt.smoothing;
    req.checkpoint_every = opt.checkpoint_every;

    FitResult fit;
    fit.keypoints = keypoints;
    std::vector<double> best = x;
    double best_loss = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opt.max_iterations; ++it) {
        const AmplitudeTable table = table_of(x);
        const double slope = x[nv] * slope_scale;
        std::vector<GradientResult> results(nd);
        parallel_for(nd, opt.threads, [&](int i) {
            try {
                results[i] = simulate_and_grad(mesh, cfg, dataset_actuation(base, table, slope, datasets[i]),
                                               keypoints, datasets[i].trace, req);
            } catch (const NumericalError& e) {
                throw NumericalError(attribute(datasets[i], e));
            } catch (const InputError& e) {
                throw InputError(attribute(datasets[i], e));
            }
        });

        double loss = 0.0;
        std::vector<double> grad(nv + 1, 0.0);
        for (int i = 0; i < nd; ++i) {
            loss += results[i].loss;
            grad[voltage_index[i]] += *results[i].d_loss_d_amplitude;
            grad[nv] += *results[i].d_loss_d_slope * slope_scale;
        }
        for (int i = 0; i < nd; ++i)
            if (!std::isfinite(*results[i].d_loss_d_amplitude) || !std::isfinite(*results[i].d_loss_d_slope))
                throw NumericalError("dataset '" + datasets[i].id + "': non-finite gradient");

        fit.loss_history.push_back(loss);
        fit.iterations = it;
        IterationRecord rec;
        rec.iteration = it;
        rec.loss = loss;
        rec.amplitudes.assign(x.begin(), x.begin() + nv);
        rec.slope = slope;
        double gn = 0.0;
        for (double g : grad) gn += g * g;
        rec.grad_norm = std::sqrt(gn);
        fit.log.push_back(rec);
        if (progress) progress(rec);

        if (loss < best_loss) {
            best_loss = loss;
            best = x;
        }
        if (loss == 0.0) break;
        const int k = static_cast<int>(fit.loss_history.size()) - 1;
        if (k >= opt.window) {
            double past = fit.loss_history[k - opt.window];
            if (std::abs(loss - past) <= opt.rel_tol * past) break;
        }
        if (it == opt.max_iterations) break;

        for (int p = 0; p <= nv; ++p) {
            m1[p] = opt.beta1 * m1[p] + (1.0 - opt.beta1) * grad[p];
            m2[p] = opt.beta2 * m2[p] + (1.0 - opt.beta2) * grad[p] * grad[p];
            double m_hat = m1[p] / (1.0 - std::pow(opt.beta1, it));
            double v_hat = m2[p] / (1.0 - std::pow(opt.beta2, it));
            x[p] -= lr[p] * m_hat / (std::sqrt(v_hat) + opt.epsilon);
        }
        for (int v = 0; v < nv; ++v) x[v] = std::clamp(x[v], 0.0, opt.amplitude_max);
        x[nv] = std::clamp(x[nv] * slope_scale, opt.slope_min, slope_max) / slope_scale;
    }

    fit.amplitude_table = table_of(best);
    fit.slope = best[nv] * slope_scale;
    fit.best_loss = best_loss;

    ValidationReport train = validate(fit, datasets, mesh, cfg, base);
    fit.per_dataset_mae = train.per_dataset;
    fit.train_mae = train.aggregate_mae;
    return fit;
}

ValidationReport validate(const FitResult& fit, const std::vector<Dataset>& unseen, const SwimmerMesh& mesh,
                          const SimConfig& cfg, const ActuationParams& base) {
    if (unseen.empty()) throw InputError("validate: no datasets");
    check_datasets(unseen);
    fit.amplitude_table.validate();
    const Keypoints keypoints = choose_keypoints(mesh);

    ValidationReport report;
    report.per_dataset.resize(unseen.size());
    report.simulated.resize(unseen.size());
    report.extrapolated.resize(unseen.size());
    for (std::size_t i = 0; i < unseen.size(); ++i) {
        const Dataset& ds = unseen[i];
        ActuationParams p = dataset_actuation(base, fit.amplitude_table, fit.slope, ds);
        report.extrapolated[i] = interpolate_amplitude(ds.voltage, fit.amplitude_table).extrapolated;
        std::vector<SimState> traj;
        try {
            traj = simulate(mesh, cfg, p, std::max(ds.trace.timestamps.back(), cfg.dt));
        } catch (const NumericalError& e) {
            throw NumericalError(attribute(ds, e));
        }
        AngleTrace sim = simulated_angle_trace(traj, keypoints, ds.trace.timestamps);
        double sum = 0.0;
        for (std::size_t k = 0; k < sim.size(); ++k) sum += std::abs(sim.sin_theta[k] - ds.trace.sin_theta[k]);
        report.per_dataset[i] = {ds.id, ds.voltage, ds.frequency, sum / static_cast<double>(sim.size())};
        report.simulated[i] = std::move(sim);
    }
    double total = 0.0;
    for (const auto& e : report.per_dataset) total += e.mae;
    report.aggregate_mae = total / static_cast<double>(report.per_dataset.size());
    return report;
}

Dataset synthesize_dataset(const std::string& id, const SwimmerMesh& mesh, const SimConfig& cfg,
                           const ActuationParams& act, double voltage, double sample_rate) {
    if (!(sample_rate > 0.0)) throw InputError("synthesize_dataset: sample rate must be positive");
    const double duration = 2.0 * act.period();
    std::vector<double> times;
    for (int k = 0;; ++k) {
        double t = k / sample_rate;
        if (t > duration + 1e-12) break;
        times.push_back(t);
    }
    auto traj = simulate(mesh, cfg, act, duration);
    Dataset ds;
    ds.id = id;
    ds.voltage = voltage;
    ds.frequency = act.frequency;
    ds.trace = simulated_angle_trace(traj, choose_keypoints(mesh), times);
    return ds;
}

}  // namespace swimsim
