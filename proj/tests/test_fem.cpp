#include "helpers.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

#include <numeric>
#include <random>

using namespace swimsim;
using testutil::coarse_mesh;

namespace {

Mat2 rotation(double angle) { return Eigen::Rotation2Dd(angle).toRotationMatrix(); }

Eigen::VectorXd transformed(const SwimmerMesh& m, const Mat2& A, const Vec2& b = Vec2::Zero()) {
    Eigen::VectorXd q(2 * m.num_vertices());
    for (int i = 0; i < m.num_vertices(); ++i) q.segment<2>(2 * i) = A * m.vertices[i] + b;
    return q;
}

SimConfig tight(double tol = 1e-12) {
    SimConfig cfg;
    cfg.solver_tol = tol;
    cfg.max_newton_iters = 200;
    return cfg;
}

double kinetic(const Simulator& sim, const SimState& s) {
    return 0.5 * s.v.dot(sim.lumped_mass().cwiseProduct(s.v));
}

}  // namespace

TEST_CASE("deformation gradient of affine maps") {
    SwimmerMesh m = rectangle_mesh(0.02, 0.01, 2, 1);
    CHECK((deformation_gradient(m, transformed(m, Mat2::Identity()), 0) - Mat2::Identity()).norm() < 1e-14);
    CHECK((deformation_gradient(m, transformed(m, 2.0 * Mat2::Identity()), 1) - 2.0 * Mat2::Identity()).norm() <
          1e-14);
    Mat2 R = rotation(M_PI / 6.0);
    CHECK((deformation_gradient(m, transformed(m, R, Vec2(0.3, -1.0)), 2) - R).norm() < 1e-14);
}

TEST_CASE("degenerate rest element is rejected") {
    SwimmerMesh m = rectangle_mesh(0.02, 0.01, 2, 1);
    m.vertices[1] = m.vertices[0] + Vec2(1e-20, 0.0);
    update_rest_areas(m);
    CHECK_THROWS_AS(Simulator(m, SimConfig{}, 6.5e4), InputError);
}

TEST_CASE("corotated energy at rest, under rotation and under stretch") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg;
    // rest and rotated meshes store no energy up to rounding; a 1% stretch sets the scale
    double reference = elastic_energy(m, transformed(m, Vec2(1.01, 1.0).asDiagonal()), cfg);
    REQUIRE(reference > 0.0);
    CHECK(elastic_energy(m, transformed(m, Mat2::Identity()), cfg) < 1e-12 * reference);
    for (double angle : {0.3, 1.7, -2.9})
        CHECK(elastic_energy(m, transformed(m, rotation(angle), Vec2(0.5, 0.2)), cfg) < 1e-10 * reference);

    // single triangle, F = diag(1.1, 1): mu * 0.1^2 + lambda/2 * 0.1^2 per unit volume
    SwimmerMesh tri;
    tri.vertices = {{0, 0}, {1, 0}, {0, 1}};
    tri.triangles = {{0, 1, 2}};
    tri.region = {Region::Soft};
    tri.fiber = {Vec2::Zero()};
    update_rest_areas(tri);
    double e = elastic_energy(tri, transformed(tri, Vec2(1.1, 1.0).asDiagonal()), cfg);
    CHECK(e == doctest::Approx(1232.7586206896553 * 0.5).epsilon(1e-12));
}

TEST_CASE("energy invariance holds for random rotations of stretched states") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd q = transformed(m, Mat2::Identity());
        for (int i = 0; i < q.size(); ++i) q[i] += 2e-4 * u(rng);
        double e0 = elastic_energy(m, q, cfg);
        Mat2 R = rotation(3.0 * u(rng));
        Eigen::VectorXd qr(q.size());
        for (int i = 0; i < m.num_vertices(); ++i) qr.segment<2>(2 * i) = R * q.segment<2>(2 * i);
        CHECK(std::abs(elastic_energy(m, qr, cfg) - e0) < 1e-9 * e0);
    }
}

TEST_CASE("corotated and muscle derivatives match finite differences") {
    Mat2 F;
    F << 1.05, 0.1, -0.07, 0.93;
    const double mu = 2e4, lambda = 1.8e5, h = 1e-6;
    CorotatedTerm t = corotated_term(F, mu, lambda);
    MuscleTerm mt = muscle_term(F, Vec2(0.8, 0.6), 0.9, 6.5e4);
    for (int k = 0; k < 4; ++k) {
        Mat2 Fp = F, Fm = F;
        Fp(k / 2, k % 2) += h;
        Fm(k / 2, k % 2) -= h;
        CorotatedTerm tp = corotated_term(Fp, mu, lambda), tm = corotated_term(Fm, mu, lambda);
        CHECK((tp.energy - tm.energy) / (2 * h) == doctest::Approx(t.gradient[k]).epsilon(1e-6));
        Vec4 col = (tp.gradient - tm.gradient) / (2 * h);
        CHECK((col - t.hessian.col(k)).norm() < 1e-5 * t.hessian.norm());

        MuscleTerm mp = muscle_term(Fp, Vec2(0.8, 0.6), 0.9, 6.5e4);
        MuscleTerm mm = muscle_term(Fm, Vec2(0.8, 0.6), 0.9, 6.5e4);
        CHECK((mp.energy - mm.energy) / (2 * h) == doctest::Approx(mt.gradient[k]).epsilon(1e-6));
        CHECK(((mp.gradient - mm.gradient) / (2 * h) - mt.hessian.col(k)).norm() < 1e-5 * mt.hessian.norm());
    }
    MuscleTerm ap = muscle_term(F, Vec2(0.8, 0.6), 0.9 + h, 6.5e4);
    MuscleTerm am = muscle_term(F, Vec2(0.8, 0.6), 0.9 - h, 6.5e4);
    CHECK(((ap.gradient - am.gradient) / (2 * h) - mt.d_gradient_d_activation).norm() <
          1e-5 * mt.d_gradient_d_activation.norm());
}

TEST_CASE("rest state is a fixed point") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg;
    SimState s0 = rest_state(m);
    StepReport rep;
    SimState s1 = step(m, s0, MuscleActivations{1.0, 1.0}, cfg, 6.5e4, &rep);
    CHECK(rep.residual <= cfg.solver_tol);
    CHECK((s1.q - s0.q).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s1.v.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s1.t == doctest::Approx(cfg.dt));
}

TEST_CASE("free body translates rigidly and conserves momentum") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg = tight();
    Simulator sim(m, cfg, 6.5e4);
    SimState s = rest_state(m);
    const Vec2 v(0.03, -0.01);
    for (int i = 0; i < m.num_vertices(); ++i) s.v.segment<2>(2 * i) = v;
    const Eigen::VectorXd& mass = sim.lumped_mass();

    auto momentum = [&](const SimState& st) {
        Vec2 p = Vec2::Zero();
        for (int i = 0; i < st.num_vertices(); ++i) p += mass[2 * i] * st.v.segment<2>(2 * i);
        return p;
    };
    auto com = [&](const SimState& st) {
        Vec2 c = Vec2::Zero();
        double total = 0.0;
        for (int i = 0; i < st.num_vertices(); ++i) {
            c += mass[2 * i] * st.position(i);
            total += mass[2 * i];
        }
        return Vec2(c / total);
    };
    Vec2 p0 = momentum(s);
    for (int k = 0; k < 5; ++k) {
        SimState next = sim.step(s, {});
        CHECK((momentum(next) - p0).norm() <= 1e-8 * p0.norm());
        CHECK((com(next) - com(s) - cfg.dt * v).norm() <= 1e-8 * cfg.dt * v.norm());
        s = next;
    }
}

TEST_CASE("momentum is conserved while muscles act") {
    const SwimmerMesh& m = coarse_mesh();
    Simulator sim(m, tight(), 6.5e4);
    SimState s = rest_state(m);
    const Eigen::VectorXd& mass = sim.lumped_mass();
    for (int k = 0; k < 10; ++k) {
        s = sim.step(s, MuscleActivations{0.9, 1.0});
        Vec2 p = Vec2::Zero();
        double scale = 0.0;
        for (int i = 0; i < s.num_vertices(); ++i) {
            p += mass[2 * i] * s.v.segment<2>(2 * i);
            scale += mass[2 * i] * s.v.segment<2>(2 * i).norm();
        }
        CHECK(p.norm() <= 1e-8 * scale);
    }
}

TEST_CASE("a stretched element relaxes with non-increasing energy") {
    SwimmerMesh tri;
    tri.vertices = {{0, 0}, {0.01, 0}, {0, 0.01}};
    tri.triangles = {{0, 1, 2}};
    tri.region = {Region::Soft};
    tri.fiber = {Vec2::Zero()};
    update_rest_areas(tri);
    SimConfig cfg = tight(1e-10);
    cfg.dt = 1e-3;
    Simulator sim(tri, cfg, 6.5e4);
    SimState s = rest_state(tri);
    s.q = transformed(tri, Vec2(1.2, 1.0).asDiagonal());

    double e_prev = sim.potential_energy(s.q, {}) + kinetic(sim, s);
    const double e0 = e_prev;
    for (int k = 0; k < 400; ++k) {
        s = sim.step(s, {});
        double e = sim.potential_energy(s.q, {}) + kinetic(sim, s);
        CHECK(e <= e_prev + 1e-12 * e0);
        e_prev = e;
    }
    CHECK(elastic_energy(tri, s.q, cfg) < 1e-3 * e0);
}

TEST_CASE("undamped implicit Euler never gains energy") {
    SwimmerMesh m = rectangle_mesh(0.05, 0.01, 10, 2);
    SimConfig cfg = tight(1e-10);
    for (auto& mat : cfg.materials) mat.damping = 0.0;
    cfg.dt = 2e-3;
    Simulator sim(m, cfg, 6.5e4);
    SimState s = rest_state(m);
    Eigen::VectorXd q = transformed(m, Mat2::Identity());
    for (int i = 0; i < m.num_vertices(); ++i) q[2 * i + 1] += 0.002 * std::pow(m.vertices[i].x() / 0.05, 2);
    s.q = q;
    double e_prev = sim.potential_energy(s.q, {}) + kinetic(sim, s);
    const double e0 = e_prev;
    for (int k = 0; k < 100; ++k) {
        s = sim.step(s, {});
        double e = sim.potential_energy(s.q, {}) + kinetic(sim, s);
        CHECK(e <= e_prev + cfg.solver_tol * e0);
        e_prev = e;
    }
}

TEST_CASE("step is independent of vertex ordering") {
    SwimmerMesh m = rectangle_mesh(0.05, 0.01, 8, 2);
    SimConfig cfg = tight(1e-13);
    SimState s = rest_state(m);
    for (int i = 0; i < m.num_vertices(); ++i) s.q[2 * i] *= 1.0 + 0.05 * m.vertices[i].y() / 0.01;

    std::vector<int> perm(m.num_vertices());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(3));  // new index of old vertex i is perm[i]
    SwimmerMesh pm = m;
    SimState ps = s;
    for (int i = 0; i < m.num_vertices(); ++i) {
        pm.vertices[perm[i]] = m.vertices[i];
        ps.q.segment<2>(2 * perm[i]) = s.q.segment<2>(2 * i);
        ps.v.segment<2>(2 * perm[i]) = s.v.segment<2>(2 * i);
    }
    for (auto& t : pm.triangles)
        for (int& v : t) v = perm[v];

    SimState a = step(m, s, {}, cfg);
    SimState b = step(pm, ps, {}, cfg);
    for (int i = 0; i < m.num_vertices(); ++i)
        CHECK((a.position(i) - b.position(perm[i])).norm() <= 1e-10 * 0.05);
}

TEST_CASE("inverted input element raises an inversion error") {
    SwimmerMesh m = rectangle_mesh(0.02, 0.01, 2, 1);
    SimState s = rest_state(m);
    s.q = transformed(m, Vec2(1.0, -1.0).asDiagonal());
    CHECK_THROWS_AS(elastic_energy(m, s.q, SimConfig{}), InversionError);
}

TEST_CASE("non-convergence is reported") {
    SwimmerMesh m = rectangle_mesh(0.05, 0.01, 10, 2);
    SimConfig cfg;
    cfg.max_newton_iters = 1;
    cfg.solver_tol = 1e-14;
    SimState s = rest_state(m);
    for (int i = 0; i < m.num_vertices(); ++i) s.q[2 * i + 1] += 0.01 * std::pow(m.vertices[i].x() / 0.05, 2);
    CHECK_THROWS_AS(step(m, s, {}, cfg), ConvergenceError);
}

TEST_CASE("pinned head keeps its vertices fixed") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg;
    cfg.boundary = Boundary::PinnedHead;
    cfg.pin_length = 0.02;
    auto traj = simulate(m, cfg, testutil::drive(0.15, 8.0, 2.0), 0.2);
    Simulator sim(m, cfg, 6.5e4);
    int pinned = 0;
    for (int d = 0; d < sim.num_dofs(); ++d)
        if (sim.pinned(d)) {
            ++pinned;
            CHECK(traj.back().q[d] == traj.front().q[d]);
        }
    CHECK(pinned > 0);
}

TEST_CASE("config validation") {
    SimConfig cfg;
    cfg.dt = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = {};
    cfg.materials[0].poisson_ratio = 0.5;
    CHECK_THROWS_AS(cfg.validate(), InputError);
    cfg = {};
    cfg.materials[2].damping = -1.0;
    CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("simulate produces the expected number of states") {
    const SwimmerMesh& m = coarse_mesh();
    CHECK(step_count(4.0, 0.01) == 400);
    CHECK(step_count(0.105, 0.01) == 11);
    auto traj = simulate(m, SimConfig{}, testutil::drive(0.0, 10.0, 0.5), 4.0);
    CHECK(traj.size() == 401);
    SimState rest = rest_state(m);
    for (const auto& s : traj) CHECK((s.q - rest.q).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(traj.back().t == doctest::Approx(4.0));
    CHECK_THROWS_AS(simulate(m, SimConfig{}, testutil::drive(0.1, 10.0, 0.5), 0.0), InputError);
}

TEST_CASE("doubling the frequency halves the bending period") {
    const SwimmerMesh& m = coarse_mesh();
    Keypoints kp = choose_keypoints(m);
    auto period = [&](double f) {
        auto traj = simulate(m, SimConfig{}, testutil::drive(0.15, 8.0, f), 3.0);
        std::vector<double> up;  // upward zero crossings after the start-up transient
        for (std::size_t k = 1; k < traj.size(); ++k) {
            auto angle = [&](std::size_t j) {
                return bending_angle(traj[j].position(kp.head), traj[j].position(kp.middle),
                                     traj[j].position(kp.tail));
            };
            double a0 = angle(k - 1), a1 = angle(k);
            if (traj[k].t > 1.0 && a0 < 0.0 && a1 >= 0.0)
                up.push_back(traj[k - 1].t + (traj[k].t - traj[k - 1].t) * a0 / (a0 - a1));
        }
        REQUIRE(up.size() >= 2);
        return (up.back() - up.front()) / (up.size() - 1);
    };
    double p1 = period(1.0), p2 = period(2.0);
    CHECK(p1 == doctest::Approx(1.0).epsilon(0.05));
    CHECK(p1 / p2 == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("cantilever strip matches Euler-Bernoulli") {
    auto r = testutil::cantilever_tip_deflection(40, 4);
    CHECK(r.simulated > 0.0);
    CHECK(std::abs(r.simulated - r.euler_bernoulli) <= 0.15 * r.euler_bernoulli);
}

TEST_CASE("step failures carry the step index") {
    const SwimmerMesh& m = coarse_mesh();
    SimConfig cfg;
    cfg.max_newton_iters = 1;
    cfg.solver_tol = 1e-15;
    try {
        simulate(m, cfg, testutil::drive(0.3, 10.0, 2.0), 0.1);
        FAIL("expected a step failure");
    } catch (const StepFailure& e) {
        CHECK(e.step() >= 0);
        CHECK(std::string(e.what()).rfind("step ", 0) == 0);
    }
}
