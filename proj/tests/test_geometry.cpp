#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

using namespace swimsim;

TEST_CASE("profile halfwidth examples") {
    ProfileParams p;
    CHECK(profile_halfwidth(0.0, p) == 0.0);

    p.max_halfwidth = 0.0105;
    // 0.0105 * (c1/2 + c2/4 + c3/8 + c4/16 + c5/32), evaluated offline
    CHECK(profile_halfwidth(0.5, p) == doctest::Approx(0.010399462499999994).epsilon(1e-14));

    ProfileParams zero;
    zero.coeffs = {0, 0, 0, 0, 0, 0};
    for (double u : {0.0, 0.3, 0.77, 1.0}) CHECK(profile_halfwidth(u, zero) == 0.0);

    CHECK_THROWS_AS(profile_halfwidth(-0.01, p), InputError);
    CHECK_THROWS_AS(profile_halfwidth(1.01, p), InputError);
}

TEST_CASE("default profile is closed and nonnegative") {
    ProfileParams p;
    CHECK(p.closed());
    CHECK_NOTHROW(p.validate());
    for (int i = 0; i <= 1000; ++i) CHECK(profile_polynomial(i / 1000.0, p.coeffs) >= -1e-12);
}

TEST_CASE("invalid profiles are rejected") {
    ProfileParams p;
    p.length = 0.0;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    p.spine_thickness = 2.5 * p.max_halfwidth;
    CHECK_THROWS_AS(p.validate(), InputError);
    p = {};
    CHECK_THROWS_AS(generate_mesh(p, -1.0, 0.5), InputError);
    CHECK_THROWS_AS(generate_mesh(p, 0.01, 0.0), InputError);
    CHECK_THROWS_AS(generate_mesh(p, 0.01, 1.5), InputError);
}

TEST_CASE("default mesh satisfies the mesh invariants") {
    ProfileParams p;
    SwimmerMesh m = generate_mesh(p, 0.0014, 0.25);
    CHECK(m.num_vertices() >= 1000);
    CHECK(m.num_vertices() <= 2000);
    CHECK_NOTHROW(m.validate());
    CHECK(spine_labeling_error(m, p) <= 0.2e-3);

    std::array<int, kRegionCount> counts{};
    for (int e = 0; e < m.num_triangles(); ++e) {
        const auto& t = m.triangles[e];
        Vec2 c = (m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0;
        CHECK(m.rest_area[e] > 0.0);
        ++counts[static_cast<int>(m.region[e])];
        if (m.region[e] == Region::UpperMuscle) CHECK(c.y() > 0.0);
        if (m.region[e] == Region::LowerMuscle) CHECK(c.y() < 0.0);
        bool muscle = m.region[e] == Region::UpperMuscle || m.region[e] == Region::LowerMuscle;
        CHECK((m.fiber[e].norm() == doctest::Approx(1.0)) == muscle);
    }
    // labels partition the triangle set, and every region is used
    int total = 0;
    for (int c : counts) {
        CHECK(c > 0);
        total += c;
    }
    CHECK(total == m.num_triangles());
}

TEST_CASE("mesh is mirror symmetric with swapped muscle labels") {
    SwimmerMesh m = generate_mesh(ProfileParams{}, 0.004, 0.5);
    auto key = [](const Vec2& v) {
        return std::pair<long long, long long>(std::llround(v.x() * 1e9), std::llround(v.y() * 1e9));
    };
    std::set<std::pair<long long, long long>> verts;
    for (const auto& v : m.vertices) verts.insert(key(v));
    for (const auto& v : m.vertices) CHECK(verts.count(key(Vec2(v.x(), -v.y()))) == 1);

    std::map<std::pair<long long, long long>, Region> by_centroid;
    for (int e = 0; e < m.num_triangles(); ++e) {
        const auto& t = m.triangles[e];
        by_centroid[key((m.vertices[t[0]] + m.vertices[t[1]] + m.vertices[t[2]]) / 3.0)] = m.region[e];
    }
    auto mirrored = [](Region r) {
        if (r == Region::UpperMuscle) return Region::LowerMuscle;
        if (r == Region::LowerMuscle) return Region::UpperMuscle;
        return r;
    };
    for (const auto& [c, r] : by_centroid) {
        auto it = by_centroid.find({c.first, -c.second});
        REQUIRE(it != by_centroid.end());
        CHECK(it->second == mirrored(r));
    }
}

TEST_CASE("halving the edge length multiplies the vertex count by 3 to 5") {
    ProfileParams p;
    int n1 = generate_mesh(p, 0.0014, 0.25).num_vertices();
    int n2 = generate_mesh(p, 0.0007, 0.25).num_vertices();
    double ratio = double(n2) / n1;
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);
}

TEST_CASE("mesh area converges to the profile integral") {
    ProfileParams p;
    double exact = domain_area(p);
    double a1 = mesh_area(generate_mesh(p, 0.002, 0.5));
    double a2 = mesh_area(generate_mesh(p, 0.001, 0.5));
    CHECK(std::abs(a2 - a1) / exact < 0.01);
    CHECK(std::abs(a2 - exact) < std::abs(a1 - exact) + 1e-12);
    CHECK(std::abs(a2 - exact) / exact < 0.01);
}

TEST_CASE("rectangle mesh is structured with positive areas") {
    SwimmerMesh m = rectangle_mesh(0.1, 0.01, 6, 2);
    CHECK(m.num_vertices() == 21);
    CHECK(m.num_triangles() == 24);
    CHECK_NOTHROW(m.validate());
    for (double a : m.rest_area) CHECK(a > 0.0);
    CHECK(mesh_area(m) == doctest::Approx(1e-3).epsilon(1e-12));
}

namespace {
SwimmerMesh toy_spine_mesh() {
    SwimmerMesh m;
    m.vertices = {{0, 0}, {1e-3, 0}, {0, 3e-4},
                  {2e-3, 0}, {3e-3, 0}, {2e-3, 3e-4},
                  {4e-3, 0.9e-3}, {5e-3, 0.9e-3}, {4e-3, 1.2e-3}};
    m.triangles = {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}};
    m.region = {Region::Spine, Region::Spine, Region::Spine};
    m.fiber.assign(3, Vec2::Zero());
    update_rest_areas(m);
    return m;
}
}  // namespace

TEST_CASE("spine labeling error") {
    ProfileParams p;  // spine thickness 1 mm
    SwimmerMesh m = toy_spine_mesh();
    // the third centroid sits at y = 1 mm, 0.5 mm outside the band
    CHECK(spine_labeling_error(m, p) == doctest::Approx(0.5e-3 / 3.0).epsilon(1e-12));

    m.vertices[6].y() = m.vertices[7].y() = 0.0;
    m.vertices[8].y() = 3e-4;
    CHECK(spine_labeling_error(m, p) == 0.0);

    m.region.assign(3, Region::Soft);
    CHECK_THROWS_AS(spine_labeling_error(m, p), InputError);
}

TEST_CASE("mesh validation catches defects") {
    SwimmerMesh m = rectangle_mesh(0.1, 0.01, 3, 1);
    SwimmerMesh flipped = m;
    std::swap(flipped.triangles[0][1], flipped.triangles[0][2]);
    CHECK_THROWS_AS(flipped.validate(), InputError);

    SwimmerMesh dup = m;
    dup.vertices.push_back(dup.vertices[0]);
    CHECK_THROWS_AS(dup.validate(), InputError);

    SwimmerMesh bad_label = m;
    bad_label.region[0] = Region::UpperMuscle;
    CHECK_THROWS_AS(bad_label.validate(), InputError);
}

TEST_CASE("region names round trip") {
    for (int r = 0; r < kRegionCount; ++r)
        CHECK(parse_region(region_name(static_cast<Region>(r))) == static_cast<Region>(r));
    CHECK_THROWS_AS(parse_region("fin"), InputError);
}
