#pragma once

#include "swimsim/common.hpp"

#include <utility>
#include <vector>

namespace swimsim {

enum class Muscle { Upper, Lower };

/// Parameters of the sloped-box (trapezoidal) muscle drive.
///
/// Within a muscle's active window (duty * period long) the activation falls
/// from 1 toward 1 - amplitude at rate slope * amplitude, holds, and rises back
/// at the same rate, so each edge lasts 1 / slope seconds. When the window is
/// too short for two full edges the pulse degenerates to a triangle. The lower
/// muscle lags the upper one by phase_offset periods.
struct ActuationParams {
    double amplitude = 0.0;
    double slope = 10.0;          // 1/s
    double frequency = 1.0;       // Hz
    double phase_offset = 0.5;    // periods
    double muscle_stiffness = 6.5e4;  // Pa
    double duty = 0.5;

    void validate() const;
    double period() const { return 1.0 / frequency; }
};

struct ActivationSample {
    double value = 1.0;
    double d_amplitude = 0.0;
    double d_slope = 0.0;
};

/// Activation a(t) of one muscle and its derivatives with respect to
/// amplitude and slope.
///
/// `smoothing` > 0 rounds the kinks of the trapezoid with a softplus of
/// radius smoothing * period (in time), which makes a(t) smooth in both
/// parameters. With smoothing == 0 the exact piecewise-linear pulse is
/// returned.
ActivationSample activation_signal(double t, const ActuationParams& p, Muscle muscle,
                                   double smoothing = 0.0);

struct MuscleActivations {
    double upper = 1.0;
    double lower = 1.0;
};

/// Fiber-stretch penalty density and its derivatives with respect to
/// vec(F) = (F00, F01, F10, F11).
struct MuscleTerm {
    double energy = 0.0;        // per unit volume
    Vec4 gradient = Vec4::Zero();
    Mat4 hessian = Mat4::Zero();
    Vec4 d_gradient_d_activation = Vec4::Zero();
};

MuscleTerm muscle_term(const Mat2& F, const Vec2& fiber, double activation, double stiffness);

/// (w/2) * area * (|F fiber| - a)^2.
double muscle_energy(const Mat2& F, const Vec2& fiber, double activation, double stiffness,
                     double area);

/// Knots (voltage [V], amplitude) sorted by strictly increasing voltage.
struct AmplitudeTable {
    std::vector<std::pair<double, double>> entries;

    void validate() const;
};

struct InterpolatedAmplitude {
    double amplitude = 0.0;
    /// Voltage was outside the table; the nearest end value was returned.
    bool extrapolated = false;
};

InterpolatedAmplitude interpolate_amplitude(double voltage, const AmplitudeTable& table);

}  // namespace swimsim
