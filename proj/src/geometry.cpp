#include "swimsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>
#include <utility>

namespace swimsim {

std::string_view region_name(Region r) {
    switch (r) {
        case Region::Spine: return "spine";
        case Region::UpperMuscle: return "upper_muscle";
        case Region::LowerMuscle: return "lower_muscle";
        case Region::Soft: return "soft";
    }
    return "unknown";
}

Region parse_region(std::string_view name) {
    for (int i = 0; i < kRegionCount; ++i) {
        auto r = static_cast<Region>(i);
        if (region_name(r) == name) return r;
    }
    throw InputError("unknown region label '" + std::string(name) + "'");
}

double profile_polynomial(double u, const std::array<double, 6>& coeffs) {
    double acc = 0.0;
    for (int k = 5; k >= 0; --k) acc = acc * u + coeffs[k];
    return acc;
}

double profile_halfwidth(double u, const ProfileParams& p) {
    if (!(u >= 0.0 && u <= 1.0))
        throw InputError("profile coordinate u = " + std::to_string(u) + " outside [0, 1]");
    return std::max(0.0, p.max_halfwidth * profile_polynomial(u, p.coeffs));
}

void ProfileParams::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0) || !std::isfinite(v))
            throw InputError(std::string("profile: ") + name + " must be positive");
    };
    positive(length, "length");
    positive(max_halfwidth, "max_halfwidth");
    positive(tail_length, "tail_length");
    positive(spine_thickness, "spine_thickness");
    if (spine_thickness >= 2.0 * max_halfwidth)
        throw InputError("profile: spine_thickness must be smaller than 2 * max_halfwidth");
    if (!(head_length >= 0.0) || head_length > length)
        throw InputError("profile: head_length must lie in [0, length]");
    for (double c : coeffs)
        if (!std::isfinite(c)) throw InputError("profile: non-finite polynomial coefficient");
    constexpr int kSamples = 1000;
    for (int i = 0; i <= kSamples; ++i) {
        double u = static_cast<double>(i) / kSamples;
        if (profile_polynomial(u, coeffs) < -1e-9)
            throw InputError("profile: polynomial is negative at u = " + std::to_string(u));
    }
}

bool ProfileParams::closed() const {
    return profile_polynomial(0.0, coeffs) <= 0.05 && profile_polynomial(1.0, coeffs) <= 0.05;
}

double domain_halfwidth(double x, const ProfileParams& p) {
    const double band = 0.5 * p.spine_thickness;
    if (x > p.length) return band;
    double u = std::clamp(x / p.length, 0.0, 1.0);
    return std::max(profile_halfwidth(u, p), band);
}

namespace {

template <class F>
double adaptive_simpson(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

template <class F>
double integrate(F&& f, double a, double b, double tol) {
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y()));
}

struct ColumnNode {
    double y;
    bool band;
};

// Nodes of one column for y >= 0, ascending, starting at y = 0.
std::vector<ColumnNode> column_nodes(double x, const ProfileParams& p, double edge, double band_edge) {
    const double band = 0.5 * p.spine_thickness;
    const bool tail = x > p.length + 1e-12;
    const double spacing = tail ? edge : band_edge;
    const int nb = std::max(1, static_cast<int>(std::ceil(band / spacing - 1e-9)));
    const double h = tail ? band : domain_halfwidth(x, p);

    std::vector<ColumnNode> nodes;
    // A sliver of soft material thinner than half a band cell is folded into the band.
    const bool fold = h - band <= 0.5 * band_edge;
    const double band_top = fold ? h : band;
    for (int k = 0; k <= nb; ++k) nodes.push_back({band_top * k / nb, true});
    if (!fold) {
        int no = std::max(1, static_cast<int>(std::lround((h - band) / edge)));
        for (int k = 1; k <= no; ++k) nodes.push_back({band + (h - band) * k / no, false});
    }
    return nodes;
}

}  // namespace

double domain_area(const ProfileParams& p) {
    auto width = [&](double x) { return 2.0 * domain_halfwidth(x, p); };
    double body = integrate(width, 0.0, p.length, 1e-14 * p.length * p.max_halfwidth);
    return body + p.tail_length * p.spine_thickness;
}

SwimmerMesh generate_mesh(const ProfileParams& p, double target_edge_length,
                          double spine_refinement_factor) {
    p.validate();
    if (!(target_edge_length > 0.0))
        throw InputError("generate_mesh: target_edge_length must be positive");
    if (!(spine_refinement_factor > 0.0 && spine_refinement_factor <= 1.0))
        throw InputError("generate_mesh: spine_refinement_factor must lie in (0, 1]");

    auto poly = [&](double u) { return std::max(0.0, profile_polynomial(u, p.coeffs)); };
    if (integrate(poly, 0.0, 1.0, 1e-12) <= 1e-9)
        throw InputError("generate_mesh: profile has zero area");

    const double band_edge = target_edge_length * spine_refinement_factor;
    const int body_cols = std::max(1, static_cast<int>(std::ceil(p.length / target_edge_length - 1e-9)));
    const int tail_cols = std::max(1, static_cast<int>(std::ceil(p.tail_length / target_edge_length - 1e-9)));

    std::vector<double> xs;
    for (int i = 0; i <= body_cols; ++i) xs.push_back(p.length * i / body_cols);
    for (int i = 1; i <= tail_cols; ++i) xs.push_back(p.length + p.tail_length * i / tail_cols);

    SwimmerMesh mesh;
    std::vector<bool> in_band;
    // upper[c][k] / lower[c][k]: vertex index of node k (k = 0 is the axis) of column c.
    std::vector<std::vector<int>> upper(xs.size()), lower(xs.size());
    for (std::size_t c = 0; c < xs.size(); ++c) {
        auto nodes = column_nodes(xs[c], p, target_edge_length, band_edge);
        const int n = static_cast<int>(nodes.size());
        upper[c].resize(n);
        lower[c].resize(n);
        for (int k = n - 1; k >= 1; --k) {
            lower[c][k] = static_cast<int>(mesh.vertices.size());
            mesh.vertices.emplace_back(xs[c], -nodes[k].y);
            in_band.push_back(nodes[k].band);
        }
        upper[c][0] = lower[c][0] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.emplace_back(xs[c], 0.0);
        in_band.push_back(true);
        for (int k = 1; k < n; ++k) {
            upper[c][k] = static_cast<int>(mesh.vertices.size());
            mesh.vertices.emplace_back(xs[c], nodes[k].y);
            in_band.push_back(nodes[k].band);
        }
    }

    // Zip neighbouring columns together; the lower half reuses the same
    // connectivity with flipped winding.
    auto add = [&](int a, int b, int c, bool tail, bool upper_half) {
        const double cx = (mesh.vertices[a].x() + mesh.vertices[b].x() + mesh.vertices[c].x()) / 3.0;
        Region r;
        if (tail || (in_band[a] && in_band[b] && in_band[c]))
            r = Region::Spine;
        else if (cx < p.head_length)
            r = Region::Soft;
        else
            r = upper_half ? Region::UpperMuscle : Region::LowerMuscle;
        mesh.triangles.push_back({a, b, c});
        mesh.region.push_back(r);
        bool muscle = r == Region::UpperMuscle || r == Region::LowerMuscle;
        mesh.fiber.push_back(muscle ? Vec2(1.0, 0.0) : Vec2::Zero());
    };
    for (std::size_t c = 0; c + 1 < xs.size(); ++c) {
        const bool tail = xs[c] >= p.length - 1e-12;
        const auto& L = upper[c];
        const auto& R = upper[c + 1];
        std::size_t i = 0, j = 0;
        auto y = [&](int idx) { return mesh.vertices[idx].y(); };
        while (i + 1 < L.size() || j + 1 < R.size()) {
            bool advance_left;
            if (i + 1 >= L.size()) advance_left = false;
            else if (j + 1 >= R.size()) advance_left = true;
            else advance_left = y(L[i + 1]) <= y(R[j + 1]);
            if (advance_left) {
                add(L[i], R[j], L[i + 1], tail, true);
                add(lower[c][i], lower[c][i + 1], lower[c + 1][j], tail, false);
                ++i;
            } else {
                add(L[i], R[j], R[j + 1], tail, true);
                add(lower[c][i], lower[c + 1][j + 1], lower[c + 1][j], tail, false);
                ++j;
            }
        }
    }

    update_rest_areas(mesh);
    for (int e = 0; e < mesh.num_triangles(); ++e)
        if (!(mesh.rest_area[e] > 0.0))
            throw NumericalError("generate_mesh: produced inverted element " + std::to_string(e));
    return mesh;
}

SwimmerMesh rectangle_mesh(double length, double height, int nx, int ny) {
    if (!(length > 0.0 && height > 0.0) || nx < 1 || ny < 1)
        throw InputError("rectangle_mesh: invalid dimensions");
    SwimmerMesh mesh;
    auto id = [&](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i)
            mesh.vertices.emplace_back(length * i / nx, -0.5 * height + height * j / ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            if ((i + j) % 2 == 0) {
                mesh.triangles.push_back({a, b, c});
                mesh.triangles.push_back({a, c, d});
            } else {
                mesh.triangles.push_back({a, b, d});
                mesh.triangles.push_back({b, c, d});
            }
        }
    }
    mesh.region.assign(mesh.triangles.size(), Region::Soft);
    mesh.fiber.assign(mesh.triangles.size(), Vec2::Zero());
    update_rest_areas(mesh);
    return mesh;
}

void update_rest_areas(SwimmerMesh& m) {
    m.rest_area.resize(m.triangles.size());
    for (std::size_t e = 0; e < m.triangles.size(); ++e) {
        const auto& t = m.triangles[e];
        m.rest_area[e] = signed_area(m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
    }
}

double mesh_area(const SwimmerMesh& m) {
    return std::accumulate(m.rest_area.begin(), m.rest_area.end(), 0.0);
}

double spine_labeling_error(const SwimmerMesh& m, const ProfileParams& p) {
    const double band = 0.5 * p.spine_thickness;
    double total = 0.0;
    int count = 0;
    for (int e = 0; e < m.num_triangles(); ++e) {
        if (m.region[e] != Region::Spine) continue;
        const auto& t = m.triangles[e];
        double cy = (m.vertices[t[0]].y() + m.vertices[t[1]].y() + m.vertices[t[2]].y()) / 3.0;
        total += std::max(0.0, std::abs(cy) - band);
        ++count;
    }
    if (count == 0) throw InputError("spine_labeling_error: mesh has no spine elements");
    return total / count;
}

void SwimmerMesh::validate() const {
    const std::size_t nt = triangles.size();
    if (region.size() != nt || rest_area.size() != nt || fiber.size() != nt)
        throw InputError("mesh: per-triangle arrays have inconsistent lengths");
    if (vertices.empty() || nt == 0) throw InputError("mesh: empty");

    const int nv = num_vertices();
    for (const auto& v : vertices)
        if (!v.allFinite()) throw InputError("mesh: non-finite vertex coordinate");
    for (std::size_t e = 0; e < nt; ++e) {
        const auto& t = triangles[e];
        for (int i : t)
            if (i < 0 || i >= nv) throw InputError("mesh: triangle " + std::to_string(e) + " has bad index");
        double a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
        if (!(a > 0.0)) throw InputError("mesh: triangle " + std::to_string(e) + " is not positively oriented");
        if (std::abs(a - rest_area[e]) > 1e-9 * std::abs(a))
            throw InputError("mesh: stored rest area of triangle " + std::to_string(e) + " is stale");
        bool muscle = region[e] == Region::UpperMuscle || region[e] == Region::LowerMuscle;
        if (muscle && std::abs(fiber[e].norm() - 1.0) > 1e-9)
            throw InputError("mesh: muscle triangle " + std::to_string(e) + " lacks a unit fiber");
        double cy = (vertices[t[0]].y() + vertices[t[1]].y() + vertices[t[2]].y()) / 3.0;
        if (region[e] == Region::UpperMuscle && !(cy > 0.0))
            throw InputError("mesh: upper muscle triangle " + std::to_string(e) + " below the axis");
        if (region[e] == Region::LowerMuscle && !(cy < 0.0))
            throw InputError("mesh: lower muscle triangle " + std::to_string(e) + " above the axis");
    }

    // Duplicate vertices.
    std::vector<int> order(nv);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return vertices[a].x() < vertices[b].x(); });
    for (int i = 0; i < nv; ++i)
        for (int j = i + 1; j < nv && vertices[order[j]].x() - vertices[order[i]].x() <= 1e-9; ++j)
            if ((vertices[order[j]] - vertices[order[i]]).norm() <= 1e-9)
                throw InputError("mesh: duplicate vertices " + std::to_string(order[i]) + " and " +
                                 std::to_string(order[j]));

    // Edge connectivity.
    std::map<std::pair<int, int>, std::vector<int>> edge_tris;
    for (std::size_t e = 0; e < nt; ++e)
        for (int k = 0; k < 3; ++k) {
            int a = triangles[e][k], b = triangles[e][(k + 1) % 3];
            edge_tris[{std::min(a, b), std::max(a, b)}].push_back(static_cast<int>(e));
        }
    std::vector<std::vector<int>> adj(nt);
    for (const auto& [edge, tris] : edge_tris) {
        if (tris.size() > 2) throw InputError("mesh: non-manifold edge");
        if (tris.size() == 2) {
            adj[tris[0]].push_back(tris[1]);
            adj[tris[1]].push_back(tris[0]);
        }
    }
    std::vector<bool> seen(nt, false);
    std::queue<int> queue;
    queue.push(0);
    seen[0] = true;
    std::size_t reached = 1;
    while (!queue.empty()) {
        int e = queue.front();
        queue.pop();
        for (int f : adj[e])
            if (!seen[f]) {
                seen[f] = true;
                ++reached;
                queue.push(f);
            }
    }
    if (reached != nt) throw InputError("mesh: triangles are not edge-connected");

    std::vector<bool> used(nv, false);
    for (const auto& t : triangles)
        for (int i : t) used[i] = true;
    if (std::find(used.begin(), used.end(), false) != used.end())
        throw InputError("mesh: unreferenced vertex");
}

}  // namespace swimsim
