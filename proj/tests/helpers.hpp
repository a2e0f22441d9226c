#pragma once

#include "swimsim/adjoint.hpp"
#include "swimsim/angle.hpp"
#include "swimsim/fem.hpp"
#include "swimsim/geometry.hpp"
#include "swimsim/sysid.hpp"

#include <cmath>
#include <vector>

namespace testutil {

using namespace swimsim;

// 82 vertices, every region present.
inline const SwimmerMesh& coarse_mesh() {
    static const SwimmerMesh m = generate_mesh(ProfileParams{}, 0.01, 1.0);
    return m;
}

// 38 vertices: a widened profile so muscles survive at this resolution.
inline ProfileParams wide_profile() {
    ProfileParams p;
    p.max_halfwidth = 0.015;
    return p;
}
inline const SwimmerMesh& tiny_mesh() {
    static const SwimmerMesh m = generate_mesh(wide_profile(), 0.025, 1.0);
    return m;
}

inline ActuationParams drive(double amplitude, double slope, double frequency) {
    ActuationParams a;
    a.amplitude = amplitude;
    a.slope = slope;
    a.frequency = frequency;
    return a;
}

inline AngleTrace truncate(const AngleTrace& tr, double t_max) {
    AngleTrace out;
    for (std::size_t i = 0; i < tr.size(); ++i)
        if (tr.timestamps[i] <= t_max + 1e-12) {
            out.timestamps.push_back(tr.timestamps[i]);
            out.sin_theta.push_back(tr.sin_theta[i]);
        }
    return out;
}

inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

}  // namespace testutil

namespace testutil {

struct CantileverResult {
    double simulated = 0.0;
    double euler_bernoulli = 0.0;
};

// Clamped soft strip (100 mm x 10 mm) under a downward tip load sized for a
// 1% tip deflection, relaxed with large implicit steps.
inline CantileverResult cantilever_tip_deflection(int nx = 60, int ny = 6) {
    const double L = 0.1, h = 0.01;
    SwimmerMesh m = rectangle_mesh(L, h, nx, ny);
    SimConfig cfg;
    cfg.boundary = Boundary::PinnedHead;
    cfg.pin_length = 0.0;
    cfg.dt = 1.0;
    cfg.solver_tol = 1e-10;
    cfg.max_newton_iters = 200;
    const Material s = soft_material();
    cfg.materials = {s, s, s, s};
    const double e_plane = s.youngs_modulus / (1.0 - s.poisson_ratio * s.poisson_ratio);
    const double inertia = h * h * h / 12.0;  // per unit thickness
    const double load = 0.03 * e_plane * inertia / (L * L);

    std::vector<int> tip;
    for (int i = 0; i < m.num_vertices(); ++i)
        if (std::abs(m.vertices[i].x() - L) < 1e-12) tip.push_back(i);
    for (int i : tip) cfg.point_loads.push_back({i, Vec2(0.0, -load / tip.size())});

    Simulator sim(m, cfg, 6.5e4);
    SimState st = rest_state(m);
    for (int k = 0; k < 40; ++k) st = sim.step(st, {});
    double d = 0.0;
    for (int i : tip) d += m.vertices[i].y() - st.q[2 * i + 1];
    return {d / tip.size(), load * L * L * L / (3.0 * e_plane * inertia)};
}

}  // namespace testutil
