#include "helpers.hpp"

#include <doctest.h>

using namespace swimsim;
using testutil::drive;

namespace {

AngleTrace target_trace(const SwimmerMesh& m, const ActuationParams& truth, double t_max) {
    return testutil::truncate(synthesize_dataset("t", m, SimConfig{}, truth, 0.0).trace, t_max);
}

}  // namespace

TEST_CASE("tiny mesh gradients match central finite differences") {
    const SwimmerMesh& m = testutil::tiny_mesh();
    REQUIRE(m.num_vertices() <= 40);
    // 20 steps of dt = 0.01
    AngleTrace target = target_trace(m, drive(0.15, 8.0, 2.0), 0.2);
    GradientCheck chk = check_gradient(m, SimConfig{}, drive(0.1, 6.0, 2.0), choose_keypoints(m), target,
                                       GradientRequest{});
    CHECK(chk.amplitude.relative_error <= 1e-4);
    CHECK(chk.slope.relative_error <= 1e-4);
    CHECK(chk.amplitude.adjoint != 0.0);
    CHECK(chk.slope.adjoint != 0.0);
}

TEST_CASE("zero amplitude: loss is the target power and the slope has no effect") {
    const SwimmerMesh& m = testutil::coarse_mesh();
    AngleTrace target = target_trace(m, drive(0.15, 8.0, 2.0), 0.2);
    GradientResult g = simulate_and_grad(m, SimConfig{}, drive(0.0, 6.0, 2.0), choose_keypoints(m), target,
                                         GradientRequest{});
    double power = 0.0;
    for (double s : target.sin_theta) power += s * s;
    power /= target.size();
    CHECK(g.loss == doctest::Approx(power).epsilon(1e-12));
    REQUIRE(g.d_loss_d_slope.has_value());
    CHECK(*g.d_loss_d_slope == 0.0);
}

TEST_CASE("straight target: more amplitude means more loss") {
    const SwimmerMesh& m = testutil::coarse_mesh();
    AngleTrace zero;
    for (int k = 0; k <= 30; ++k) {
        zero.timestamps.push_back(0.01 * k);
        zero.sin_theta.push_back(0.0);
    }
    Keypoints kp = choose_keypoints(m);
    for (double a : {0.05, 0.15}) {
        GradientResult g = simulate_and_grad(m, SimConfig{}, drive(a, 8.0, 2.0), kp, zero, GradientRequest{});
        CHECK(*g.d_loss_d_amplitude >= 0.0);
    }
    double lo = simulate_and_grad(m, SimConfig{}, drive(0.05, 8.0, 2.0), kp, zero, GradientRequest{}).loss;
    double hi = simulate_and_grad(m, SimConfig{}, drive(0.06, 8.0, 2.0), kp, zero, GradientRequest{}).loss;
    CHECK(hi > lo);
}

TEST_CASE("a loss that ignores the trajectory has zero gradient") {
    const SwimmerMesh& m = testutil::coarse_mesh();
    TrackLossFn constant = [](const KeypointTrack&) { return TrackLoss{3.5, {}}; };
    AdjointResult r = adjoint_gradient(m, SimConfig{}, drive(0.15, 8.0, 2.0), choose_keypoints(m), 0.2, constant,
                                       1, 1e-3);
    CHECK(r.loss == 3.5);
    CHECK(r.d_amplitude == 0.0);
    CHECK(r.d_slope == 0.0);

    TrackLossFn explicit_zero = [](const KeypointTrack& t) {
        return TrackLoss{1.0, std::vector<std::array<Vec2, 3>>(t.times.size(), {Vec2::Zero(), Vec2::Zero(), Vec2::Zero()})};
    };
    AdjointResult z = adjoint_gradient(m, SimConfig{}, drive(0.15, 8.0, 2.0), choose_keypoints(m), 0.2,
                                       explicit_zero, 1, 1e-3);
    CHECK(z.d_amplitude == 0.0);
    CHECK(z.d_slope == 0.0);
}

TEST_CASE("checkpoint spacing does not change the gradient") {
    const SwimmerMesh& m = testutil::coarse_mesh();
    AngleTrace target = target_trace(m, drive(0.15, 8.0, 2.0), 0.3);
    Keypoints kp = choose_keypoints(m);
    GradientRequest req;
    GradientResult ref = simulate_and_grad(m, SimConfig{}, drive(0.1, 6.0, 2.0), kp, target, req);
    for (int every : {2, 7, 31}) {
        req.checkpoint_every = every;
        GradientResult g = simulate_and_grad(m, SimConfig{}, drive(0.1, 6.0, 2.0), kp, target, req);
        CHECK(testutil::rel_err(*g.d_loss_d_amplitude, *ref.d_loss_d_amplitude) <= 1e-10);
        CHECK(testutil::rel_err(*g.d_loss_d_slope, *ref.d_loss_d_slope) <= 1e-10);
        CHECK(g.loss == ref.loss);
    }
}

TEST_CASE("only requested gradients are reported") {
    const SwimmerMesh& m = testutil::coarse_mesh();
    AngleTrace target = target_trace(m, drive(0.15, 8.0, 2.0), 0.1);
    GradientRequest req;
    req.slope = false;
    GradientResult g = simulate_and_grad(m, SimConfig{}, drive(0.1, 6.0, 2.0), choose_keypoints(m), target, req);
    CHECK(g.d_loss_d_amplitude.has_value());
    CHECK_FALSE(g.d_loss_d_slope.has_value());
    CHECK(std::isfinite(g.loss));
    CHECK(g.simulated.size() == target.size());
    CHECK(g.mae >= 0.0);
    for (double r : g.per_step_residuals) CHECK(r <= SimConfig{}.solver_tol);

    req.amplitude = false;
    CHECK_THROWS_AS(req.validate(), InputError);
    req = {};
    req.checkpoint_every = 0;
    CHECK_THROWS_AS(req.validate(), InputError);
}
