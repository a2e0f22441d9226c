#pragma once

#include "swimsim/actuation.hpp"
#include "swimsim/angle.hpp"
#include "swimsim/fem.hpp"

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace swimsim {

enum class LossId { AngleMSE };

struct GradientRequest {
    LossId loss = LossId::AngleMSE;
    bool amplitude = true;
    bool slope = true;
    /// Store every k-th forward state; the rest are recomputed on the way back.
    int checkpoint_every = 1;
    /// Kink rounding of the activation signal, as a fraction of the period.
    double smoothing = 1e-3;

    void validate() const;
};

struct GradientResult {
    double loss = 0.0;
    std::optional<double> d_loss_d_amplitude;
    std::optional<double> d_loss_d_slope;
    std::vector<double> per_step_residuals;
    /// Simulated sin(theta) at the target timestamps.
    AngleTrace simulated;
    /// Mean absolute error against the target trace.
    double mae = 0.0;
};

/// Keypoint positions of every stored frame of a forward run.
struct KeypointTrack {
    std::vector<double> times;
    std::vector<std::array<Vec2, 3>> points;  // head, middle, tail
};

/// Value of a trajectory loss and its sensitivities with respect to the
/// keypoint positions of each frame.
struct TrackLoss {
    double value = 0.0;
    std::vector<std::array<Vec2, 3>> d_points;  // same length as the track; may be empty if constant
};

using TrackLossFn = std::function<TrackLoss(const KeypointTrack&)>;

struct AdjointResult {
    double loss = 0.0;
    double d_amplitude = 0.0;
    double d_slope = 0.0;
    std::vector<double> per_step_residuals;
    KeypointTrack track;
};

/// Runs the forward simulation for `duration`, evaluates `loss` on the
/// keypoint track, and back-propagates through every implicit step:
/// H_j mu_j = -(dL/dq_j + C1 mu_{j+1} + C2 mu_{j+2}), with C1 = -2M/dt^2 - D/dt
/// and C2 = M/dt^2, then dL/dp = sum_j mu_j . dG_j/da . da/dp.
AdjointResult adjoint_gradient(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                               const Keypoints& keypoints, double duration, const TrackLossFn& loss,
                               int checkpoint_every, double smoothing);

/// Mean squared sin(theta) error against `target`, sampled by linear
/// interpolation of the track.
TrackLoss angle_mse(const KeypointTrack& track, const AngleTrace& target);

GradientResult simulate_and_grad(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                                 const Keypoints& keypoints, const AngleTrace& target,
                                 const GradientRequest& req);

/// Central finite differences of the AngleMSE loss (relative step h) for the gradient check.
struct GradientCheckEntry {
    double adjoint = 0.0;
    double finite_difference = 0.0;
    double relative_error = 0.0;
};
struct GradientCheck {
    double loss = 0.0;
    GradientCheckEntry amplitude;
    GradientCheckEntry slope;
};
GradientCheck check_gradient(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                             const Keypoints& keypoints, const AngleTrace& target, const GradientRequest& req,
                             double relative_step = 1e-5);

}  // namespace swimsim
