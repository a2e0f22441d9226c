#pragma once

#include "swimsim/common.hpp"
#include "swimsim/fem.hpp"
#include "swimsim/geometry.hpp"

#include <array>
#include <span>
#include <vector>

namespace swimsim {

/// sin(theta) between head->middle and middle->tail:
/// cross(m - h, t - m) / (|m - h| |t - m|). Positive when the tail swings
/// toward +y (the upper-muscle side) for a swimmer pointing along +x.
/// Throws InputError when two consecutive markers coincide.
double bending_angle(const Vec2& head, const Vec2& middle, const Vec2& tail);

/// Bending angle and its gradient with respect to (head, middle, tail).
struct BendingAngleGradient {
    double value = 0.0;
    std::array<Vec2, 3> d_points;
};
BendingAngleGradient bending_angle_gradient(const Vec2& head, const Vec2& middle, const Vec2& tail);

struct AngleTrace {
    std::vector<double> timestamps;
    std::vector<double> sin_theta;
    bool centered = false;

    std::size_t size() const { return timestamps.size(); }
    void validate() const;
};

struct MarkerTrace {
    std::vector<double> timestamps;
    std::vector<Vec2> head, middle, tail;
    double voltage = 0.0;    // V
    double frequency = 0.0;  // Hz

    void validate() const;
};

AngleTrace angle_trace(const MarkerTrace& markers);

/// Removes the mean bending angle and shifts time so the first frame is t = 0.
AngleTrace preprocess(const AngleTrace& trace);

struct Keypoints {
    int head = 0, middle = 0, tail = 0;
};

/// Nose tip, midpoint of the nose-to-tail axis, and tail tip: the vertices
/// nearest to (x_min, 0), ((x_min + x_max)/2, 0) and (x_max, 0).
Keypoints choose_keypoints(const SwimmerMesh& mesh);

/// Frame k and weight w such that position(t) = (1 - w) q_k + w q_{k+1}.
struct Bracket {
    int frame = 0;
    double weight = 0.0;
};
Bracket bracket_time(std::span<const SimState> trajectory, double t);

/// Bending angle sampled at `sample_times` with linear interpolation of the
/// keypoint positions between stored frames.
AngleTrace simulated_angle_trace(std::span<const SimState> trajectory, const Keypoints& keypoints,
                                 std::span<const double> sample_times);

}  // namespace swimsim
