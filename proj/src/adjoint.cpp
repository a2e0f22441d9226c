#include "swimsim/adjoint.hpp"

#include <algorithm>
#include <cmath>

namespace swimsim {

void GradientRequest::validate() const {
    if (!amplitude && !slope) throw InputError("gradient request: nothing to differentiate");
    if (checkpoint_every < 1) throw InputError("gradient request: checkpoint_every must be >= 1");
    if (!(smoothing >= 0.0)) throw InputError("gradient request: smoothing must be non-negative");
}

namespace {

struct StepActivation {
    MuscleActivations value;
    ActivationSample upper, lower;
};

StepActivation activation_at_step(int k, double dt, const ActuationParams& act, double smoothing) {
    const double t_mid = (k + 0.5) * dt;
    StepActivation s;
    s.upper = activation_signal(t_mid, act, Muscle::Upper, smoothing);
    s.lower = activation_signal(t_mid, act, Muscle::Lower, smoothing);
    s.value = {s.upper.value, s.lower.value};
    return s;
}

std::array<Vec2, 3> keypoint_positions(const SimState& s, const Keypoints& k) {
    return {s.position(k.head), s.position(k.middle), s.position(k.tail)};
}

SimState advance(Simulator& sim, const SimState& state, int k, const ActuationParams& act, double smoothing,
                 StepReport* report) {
    try {
        SimState next = sim.step(state, activation_at_step(k, sim.config().dt, act, smoothing).value, report);
        next.t = (k + 1) * sim.config().dt;
        return next;
    } catch (const NumericalError& e) {
        throw StepFailure(k, e.what());
    }
}

KeypointTrack forward_track(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                            const Keypoints& keypoints, double duration, double smoothing) {
    Simulator sim(mesh, cfg, act.muscle_stiffness);
    const int n = step_count(duration, cfg.dt);
    SimState state = rest_state(mesh);
    KeypointTrack track;
    track.times.push_back(0.0);
    track.points.push_back(keypoint_positions(state, keypoints));
    for (int k = 0; k < n; ++k) {
        state = advance(sim, state, k, act, smoothing, nullptr);
        track.times.push_back(state.t);
        track.points.push_back(keypoint_positions(state, keypoints));
    }
    return track;
}

struct TrackSample {
    int frame;
    double weight;
};

TrackSample locate(const KeypointTrack& track, double t) {
    const double t0 = track.times.front(), tn = track.times.back();
    const double slack = 1e-9 * (tn - t0);
    if (!(t >= t0 - slack && t <= tn + slack))
        throw InputError("sample time " + std::to_string(t) + " outside the simulated span");
    auto it = std::upper_bound(track.times.begin(), track.times.end(), t);
    int k = static_cast<int>(it - track.times.begin()) - 1;
    k = std::clamp(k, 0, static_cast<int>(track.times.size()) - 2);
    double w = std::clamp((t - track.times[k]) / (track.times[k + 1] - track.times[k]), 0.0, 1.0);
    return {k, w};
}

double target_duration(const AngleTrace& target, double dt) {
    if (target.size() == 0) throw InputError("target angle trace is empty");
    target.validate();
    if (target.timestamps.front() < -1e-12) throw InputError("target trace must start at t >= 0");
    return std::max(target.timestamps.back(), dt);
}

double relative_error(double a, double b) {
    double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

TrackLoss angle_mse(const KeypointTrack& track, const AngleTrace& target) {
    if (track.times.size() < 2) throw InputError("angle_mse: track needs at least two frames");
    const std::size_t n = target.size();
    if (n == 0) throw InputError("angle_mse: empty target");
    TrackLoss out;
    out.d_points.assign(track.times.size(), {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()});
    for (std::size_t i = 0; i < n; ++i) {
        TrackSample s = locate(track, target.timestamps[i]);
        std::array<Vec2, 3> p;
        for (int m = 0; m < 3; ++m)
            p[m] = (1.0 - s.weight) * track.points[s.frame][m] + s.weight * track.points[s.frame + 1][m];
        BendingAngleGradient g = bending_angle_gradient(p[0], p[1], p[2]);
        const double r = g.value - target.sin_theta[i];
        out.value += r * r / static_cast<double>(n);
        const double scale = 2.0 * r / static_cast<double>(n);
        for (int m = 0; m < 3; ++m) {
            out.d_points[s.frame][m] += scale * (1.0 - s.weight) * g.d_points[m];
            out.d_points[s.frame + 1][m] += scale * s.weight * g.d_points[m];
        }
    }
    return out;
}

AdjointResult adjoint_gradient(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                               const Keypoints& keypoints, double duration, const TrackLossFn& loss,
                               int checkpoint_every, double smoothing) {
    act.validate();
    if (checkpoint_every < 1) throw InputError("checkpoint_every must be >= 1");
    Simulator sim(mesh, cfg, act.muscle_stiffness);
    const double dt = cfg.dt;
    const int n = step_count(duration, dt);

    // Forward pass, keeping checkpoints.
    AdjointResult result;
    std::vector<SimState> checkpoints;
    SimState state = rest_state(mesh);
    checkpoints.push_back(state);
    result.track.times.push_back(0.0);
    result.track.points.push_back(keypoint_positions(state, keypoints));
    for (int k = 0; k < n; ++k) {
        StepReport report;
        state = advance(sim, state, k, act, smoothing, &report);
        result.per_step_residuals.push_back(report.residual);
        result.track.times.push_back(state.t);
        result.track.points.push_back(keypoint_positions(state, keypoints));
        if ((k + 1) % checkpoint_every == 0) checkpoints.push_back(state);
    }

    TrackLoss tl = loss(result.track);
    result.loss = tl.value;
    if (!std::isfinite(tl.value)) throw NumericalError("adjoint: non-finite loss");
    if (tl.d_points.empty()) return result;  // loss does not look at the trajectory

    // Backward pass over checkpoint segments, last to first.
    const int ndof = sim.num_dofs();
    const Eigen::VectorXd& mass = sim.lumped_mass();
    Eigen::VectorXd mu_next = Eigen::VectorXd::Zero(ndof);   // mu_{j+1}
    Eigen::VectorXd mu_next2 = Eigen::VectorXd::Zero(ndof);  // mu_{j+2}
    const int segments = (n + checkpoint_every - 1) / checkpoint_every;
    for (int s = segments - 1; s >= 0; --s) {
        const int start = s * checkpoint_every;
        const int end = std::min(start + checkpoint_every, n);
        std::vector<SimState> frames;
        frames.reserve(end - start + 1);
        frames.push_back(checkpoints[s]);
        for (int k = start; k < end; ++k) {
            const bool stored = (k + 1) % checkpoint_every == 0;
            if (stored) frames.push_back(checkpoints[(k + 1) / checkpoint_every]);
            else frames.push_back(advance(sim, frames.back(), k, act, smoothing, nullptr));
        }

        for (int j = end; j > start; --j) {
            const SimState& qj = frames[j - start];
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ndof);
            const int idx[3] = {keypoints.head, keypoints.middle, keypoints.tail};
            for (int m = 0; m < 3; ++m) rhs.segment<2>(2 * idx[m]) += tl.d_points[j][m];
            rhs += (-2.0 / (dt * dt)) * mass.cwiseProduct(mu_next) - sim.damping_matrix() * mu_next / dt;
            rhs += (1.0 / (dt * dt)) * mass.cwiseProduct(mu_next2);
            rhs = -rhs;
            for (int i = 0; i < ndof; ++i)
                if (sim.pinned(i)) rhs(i) = 0.0;

            StepActivation a = activation_at_step(j - 1, dt, act, smoothing);
            try {
                sim.factor_step_hessian(qj.q, a.value);
            } catch (const NumericalError& e) {
                throw StepFailure(j - 1, e.what());
            }
            Eigen::VectorXd mu = sim.solve(rhs);
            auto dG = sim.residual_activation_derivatives(qj.q);
            const double du = mu.dot(dG[0]), dl = mu.dot(dG[1]);
            result.d_amplitude += du * a.upper.d_amplitude + dl * a.lower.d_amplitude;
            result.d_slope += du * a.upper.d_slope + dl * a.lower.d_slope;

            mu_next2 = std::move(mu_next);
            mu_next = std::move(mu);
        }
    }
    if (!std::isfinite(result.d_amplitude) || !std::isfinite(result.d_slope))
        throw NumericalError("adjoint: non-finite gradient");
    return result;
}

GradientResult simulate_and_grad(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                                 const Keypoints& keypoints, const AngleTrace& target,
                                 const GradientRequest& req) {
    req.validate();
    const double duration = target_duration(target, cfg.dt);
    AdjointResult adj = adjoint_gradient(
        mesh, cfg, act, keypoints, duration, [&](const KeypointTrack& t) { return angle_mse(t, target); },
        req.checkpoint_every, req.smoothing);

    GradientResult out;
    out.loss = adj.loss;
    if (req.amplitude) out.d_loss_d_amplitude = adj.d_amplitude;
    if (req.slope) out.d_loss_d_slope = adj.d_slope;
    out.per_step_residuals = std::move(adj.per_step_residuals);
    out.simulated.timestamps = target.timestamps;
    for (double t : target.timestamps) {
        TrackSample s = locate(adj.track, t);
        std::array<Vec2, 3> p;
        for (int m = 0; m < 3; ++m)
            p[m] = (1.0 - s.weight) * adj.track.points[s.frame][m] + s.weight * adj.track.points[s.frame + 1][m];
        out.simulated.sin_theta.push_back(bending_angle(p[0], p[1], p[2]));
    }
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i)
        abs_sum += std::abs(out.simulated.sin_theta[i] - target.sin_theta[i]);
    out.mae = abs_sum / static_cast<double>(target.size());
    return out;
}

GradientCheck check_gradient(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                             const Keypoints& keypoints, const AngleTrace& target, const GradientRequest& req,
                             double relative_step) {
    GradientRequest both = req;
    both.amplitude = both.slope = true;
    GradientResult g = simulate_and_grad(mesh, cfg, act, keypoints, target, both);
    const double duration = target_duration(target, cfg.dt);

    auto loss_at = [&](ActuationParams p) {
        KeypointTrack t = forward_track(mesh, cfg, p, keypoints, duration, req.smoothing);
        return angle_mse(t, target).value;
    };
    auto central = [&](double ActuationParams::*field) {
        const double h = relative_step * std::max(std::abs(act.*field), 1e-3);
        ActuationParams plus = act, minus = act;
        plus.*field += h;
        minus.*field -= h;
        return (loss_at(plus) - loss_at(minus)) / (2.0 * h);
    };

    GradientCheck check;
    check.loss = g.loss;
    check.amplitude.adjoint = *g.d_loss_d_amplitude;
    check.amplitude.finite_difference = central(&ActuationParams::amplitude);
    check.amplitude.relative_error = relative_error(check.amplitude.adjoint, check.amplitude.finite_difference);
    check.slope.adjoint = *g.d_loss_d_slope;
    check.slope.finite_difference = central(&ActuationParams::slope);
    check.slope.relative_error = relative_error(check.slope.adjoint, check.slope.finite_difference);
    return check;
}

}  // namespace swimsim
