#include "swimsim/actuation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace swimsim {

void ActuationParams::validate() const {
    if (!(amplitude >= 0.0 && amplitude < 1.0))
        throw InputError("actuation: amplitude must lie in [0, 1)");
    if (!(slope > 0.0) || !std::isfinite(slope)) throw InputError("actuation: slope must be positive");
    if (!(frequency > 0.0) || !std::isfinite(frequency))
        throw InputError("actuation: frequency must be positive");
    if (!(phase_offset >= 0.0 && phase_offset < 1.0))
        throw InputError("actuation: phase_offset must lie in [0, 1)");
    if (!(muscle_stiffness > 0.0)) throw InputError("actuation: muscle_stiffness must be positive");
    if (!(duty > 0.0 && duty <= 1.0)) throw InputError("actuation: duty must lie in (0, 1]");
}

namespace {

double softplus(double x, double eps) {
    double z = x / eps;
    return eps * (std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))));
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

}  // namespace

ActivationSample activation_signal(double t, const ActuationParams& p, Muscle muscle, double smoothing) {
    const double period = p.period();
    const double half_window = 0.5 * p.duty * period;
    const double edge = 1.0 / p.slope;
    const double lag = muscle == Muscle::Upper ? 0.0 : p.phase_offset * period;

    // Signed time from the centre of the nearest active window.
    double tau = t - lag - half_window;
    tau -= period * std::floor(tau / period + 0.5);

    double depth, d_depth_d_slope;
    if (smoothing <= 0.0) {
        double r = half_window - std::abs(tau);  // time left until the window edge
        if (r <= 0.0) {
            depth = 0.0;
            d_depth_d_slope = 0.0;
        } else if (r >= edge) {
            depth = 1.0;
            d_depth_d_slope = 0.0;
        } else {
            depth = p.slope * r;
            d_depth_d_slope = r;
        }
    } else {
        const double eps = smoothing * period;
        double abs_tau = softplus(tau, eps) + softplus(-tau, eps) - 2.0 * eps * std::log(2.0);
        double r = half_window - abs_tau;
        double capped = r - softplus(r - edge, eps);   // smooth min(r, edge)
        double clamped = softplus(capped, eps);        // smooth max(capped, 0)
        depth = p.slope * clamped;
        double d_clamped_d_edge = sigmoid(capped / eps) * sigmoid((r - edge) / eps);
        d_depth_d_slope = clamped - d_clamped_d_edge / p.slope;
    }

    ActivationSample s;
    s.value = 1.0 - p.amplitude * depth;
    s.d_amplitude = -depth;
    s.d_slope = -p.amplitude * d_depth_d_slope;
    return s;
}

MuscleTerm muscle_term(const Mat2& F, const Vec2& fiber, double activation, double stiffness) {
    Eigen::Matrix<double, 2, 4> N = Eigen::Matrix<double, 2, 4>::Zero();
    N(0, 0) = fiber.x();
    N(0, 1) = fiber.y();
    N(1, 2) = fiber.x();
    N(1, 3) = fiber.y();

    const Vec2 n = F * fiber;
    const double stretch = n.norm();
    if (!(stretch > 0.0)) throw NumericalError("muscle fiber collapsed to zero length");
    const Vec2 dir = n / stretch;
    const double gap = stretch - activation;

    MuscleTerm m;
    m.energy = 0.5 * stiffness * gap * gap;
    m.gradient = stiffness * gap * N.transpose() * dir;
    Mat2 inner = dir * dir.transpose() + (gap / stretch) * (Mat2::Identity() - dir * dir.transpose());
    m.hessian = stiffness * N.transpose() * inner * N;
    m.d_gradient_d_activation = -stiffness * N.transpose() * dir;
    return m;
}

double muscle_energy(const Mat2& F, const Vec2& fiber, double activation, double stiffness,
                     double area) {
    if (fiber.squaredNorm() == 0.0) throw InputError("muscle_energy: zero fiber vector");
    if (std::abs(fiber.norm() - 1.0) > 1e-9) throw InputError("muscle_energy: fiber must be a unit vector");
    if (!(activation > 0.0)) throw InputError("muscle_energy: activation must be positive");
    return area * muscle_term(F, fiber, activation, stiffness).energy;
}

void AmplitudeTable::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!(entries[i].second >= 0.0 && entries[i].second < 1.0))
            throw InputError("amplitude table: amplitude must lie in [0, 1)");
        if (i > 0 && !(entries[i].first > entries[i - 1].first))
            throw InputError("amplitude table: voltages must be strictly increasing");
    }
}

InterpolatedAmplitude interpolate_amplitude(double voltage, const AmplitudeTable& table) {
    if (table.entries.empty()) throw InputError("interpolate_amplitude: empty amplitude table");
    const auto& e = table.entries;
    if (voltage <= e.front().first) return {e.front().second, voltage < e.front().first};
    if (voltage >= e.back().first) return {e.back().second, voltage > e.back().first};
    auto hi = std::upper_bound(e.begin(), e.end(), voltage,
                               [](double v, const auto& knot) { return v < knot.first; });
    auto lo = hi - 1;
    if (voltage == lo->first) return {lo->second, false};
    double w = (voltage - lo->first) / (hi->first - lo->first);
    return {(1.0 - w) * lo->second + w * hi->second, false};
}

}  // namespace swimsim
