#include "swimsim/angle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace swimsim {

namespace {

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

void check_separated(const Vec2& head, const Vec2& middle, const Vec2& tail, double n1, double n2) {
    double scale = std::max({head.cwiseAbs().maxCoeff(), middle.cwiseAbs().maxCoeff(),
                             tail.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min()});
    if (!(n1 > 1e-12 * scale) || !(n2 > 1e-12 * scale))
        throw InputError("bending_angle: coincident marker points (degenerate geometry)");
}

}  // namespace

double bending_angle(const Vec2& head, const Vec2& middle, const Vec2& tail) {
    const Vec2 v1 = middle - head, v2 = tail - middle;
    const double n1 = v1.norm(), n2 = v2.norm();
    check_separated(head, middle, tail, n1, n2);
    return cross(v1, v2) / (n1 * n2);
}

BendingAngleGradient bending_angle_gradient(const Vec2& head, const Vec2& middle, const Vec2& tail) {
    const Vec2 v1 = middle - head, v2 = tail - middle;
    const double n1 = v1.norm(), n2 = v2.norm();
    check_separated(head, middle, tail, n1, n2);
    BendingAngleGradient g;
    g.value = cross(v1, v2) / (n1 * n2);
    Vec2 d_v1 = Vec2(v2.y(), -v2.x()) / (n1 * n2) - g.value * v1 / (n1 * n1);
    Vec2 d_v2 = Vec2(-v1.y(), v1.x()) / (n1 * n2) - g.value * v2 / (n2 * n2);
    g.d_points = {-d_v1, d_v1 - d_v2, d_v2};
    return g;
}

void AngleTrace::validate() const {
    if (timestamps.size() != sin_theta.size()) throw InputError("angle trace: column lengths differ");
    for (std::size_t i = 1; i < timestamps.size(); ++i)
        if (!(timestamps[i] > timestamps[i - 1]))
            throw InputError("angle trace: timestamps must be strictly increasing");
    for (double s : sin_theta)
        if (!(std::abs(s) <= 1.0 + 1e-9)) throw InputError("angle trace: |sin theta| exceeds 1");
}

void MarkerTrace::validate() const {
    const std::size_t n = timestamps.size();
    if (head.size() != n || middle.size() != n || tail.size() != n)
        throw InputError("marker trace: column lengths differ");
    if (n < 2) throw InputError("marker trace: need at least 2 frames");
    for (std::size_t i = 1; i < n; ++i)
        if (!(timestamps[i] > timestamps[i - 1]))
            throw InputError("marker trace: timestamps must be strictly increasing");
}

AngleTrace angle_trace(const MarkerTrace& markers) {
    markers.validate();
    AngleTrace out;
    out.timestamps = markers.timestamps;
    out.sin_theta.reserve(markers.timestamps.size());
    for (std::size_t i = 0; i < markers.timestamps.size(); ++i)
        out.sin_theta.push_back(bending_angle(markers.head[i], markers.middle[i], markers.tail[i]));
    return out;
}

AngleTrace preprocess(const AngleTrace& trace) {
    AngleTrace out = trace;
    if (out.size() == 0) {
        out.centered = true;
        return out;
    }
    double mean = std::accumulate(trace.sin_theta.begin(), trace.sin_theta.end(), 0.0) /
                  static_cast<double>(trace.size());
    for (double& s : out.sin_theta) s -= mean;
    const double t0 = trace.timestamps.front();
    for (double& t : out.timestamps) t -= t0;
    out.centered = true;
    return out;
}

Keypoints choose_keypoints(const SwimmerMesh& mesh) {
    if (mesh.vertices.empty()) throw InputError("choose_keypoints: empty mesh");
    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    for (const auto& v : mesh.vertices) {
        xmin = std::min(xmin, v.x());
        xmax = std::max(xmax, v.x());
    }
    auto nearest = [&](const Vec2& target) {
        int best = 0;
        for (int i = 1; i < mesh.num_vertices(); ++i)
            if ((mesh.vertices[i] - target).squaredNorm() < (mesh.vertices[best] - target).squaredNorm()) best = i;
        return best;
    };
    Keypoints k;
    k.head = nearest({xmin, 0.0});
    k.middle = nearest({0.5 * (xmin + xmax), 0.0});
    k.tail = nearest({xmax, 0.0});
    if (k.head == k.middle || k.middle == k.tail) throw InputError("choose_keypoints: mesh too coarse");
    return k;
}

Bracket bracket_time(std::span<const SimState> trajectory, double t) {
    if (trajectory.size() < 2) throw InputError("trajectory needs at least two frames");
    const double t0 = trajectory.front().t, tn = trajectory.back().t;
    const double slack = 1e-9 * (tn - t0);
    if (!(t >= t0 - slack && t <= tn + slack))
        throw InputError("sample time " + std::to_string(t) + " outside the trajectory span");
    auto it = std::upper_bound(trajectory.begin(), trajectory.end(), t,
                               [](double value, const SimState& s) { return value < s.t; });
    int k = static_cast<int>(it - trajectory.begin()) - 1;
    k = std::clamp(k, 0, static_cast<int>(trajectory.size()) - 2);
    const double ta = trajectory[k].t, tb = trajectory[k + 1].t;
    double w = std::clamp((t - ta) / (tb - ta), 0.0, 1.0);
    return {k, w};
}

AngleTrace simulated_angle_trace(std::span<const SimState> trajectory, const Keypoints& keypoints,
                                 std::span<const double> sample_times) {
    AngleTrace out;
    out.timestamps.assign(sample_times.begin(), sample_times.end());
    out.sin_theta.reserve(sample_times.size());
    const int nv = trajectory.empty() ? 0 : trajectory.front().num_vertices();
    for (int idx : {keypoints.head, keypoints.middle, keypoints.tail})
        if (idx < 0 || idx >= nv) throw InputError("keypoint index out of range");
    for (double t : sample_times) {
        Bracket b = bracket_time(trajectory, t);
        auto at = [&](int vertex) {
            return ((1.0 - b.weight) * trajectory[b.frame].position(vertex) +
                    b.weight * trajectory[b.frame + 1].position(vertex))
                .eval();
        };
        out.sin_theta.push_back(bending_angle(at(keypoints.head), at(keypoints.middle), at(keypoints.tail)));
    }
    return out;
}

}  // namespace swimsim
