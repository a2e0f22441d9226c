#pragma once

#include "swimsim/common.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace swimsim {

enum class Region : std::uint8_t { Spine = 0, UpperMuscle = 1, LowerMuscle = 2, Soft = 3 };
inline constexpr int kRegionCount = 4;

std::string_view region_name(Region r);
Region parse_region(std::string_view name);

/// Coefficients c0..c5 of the default carangiform half-width polynomial.
/// Closed at both ends, peak value 1 at u ~ 0.385.
inline constexpr std::array<double, 6> kDefaultProfileCoeffs = {
    0.0, 8.7547, -29.3838, 46.7388, -34.1567, 8.0470};

/// Planform of the swimmer. The body runs along +x from the nose (x = 0) to
/// x = length, followed by a straight tail strip of spine material.
struct ProfileParams {
    double length = 0.160;
    double max_halfwidth = 0.0075;
    double tail_length = 0.030;
    double spine_thickness = 0.001;
    std::array<double, 6> coeffs = kDefaultProfileCoeffs;
    /// Front part of the body that carries no muscle (labeled Soft).
    double head_length = 0.052;

    /// Throws InputError on non-positive dimensions, a spine wider than the
    /// body, or a negative profile.
    void validate() const;
    /// True when the normalized profile is at most 0.05 at the nose and the tail end.
    bool closed() const;
};

struct SwimmerMesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Region> region;
    std::vector<double> rest_area;
    /// Unit fiber direction for muscle triangles, zero elsewhere.
    std::vector<Vec2> fiber;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    /// Checks orientation, edge connectivity, duplicate vertices and label/fiber
    /// consistency. Throws InputError describing the first violation.
    void validate() const;
};

/// Normalized profile polynomial sum c_k u^k (no clamping, no scaling).
double profile_polynomial(double u, const std::array<double, 6>& coeffs);

double profile_halfwidth(double u, const ProfileParams& p);

/// Half-width of the meshed domain at axial position x: the profile, widened
/// to at least half the spine thickness, and the bare spine along the tail.
double domain_halfwidth(double x, const ProfileParams& p);

/// Area of the meshed domain by adaptive Simpson quadrature of 2 * domain_halfwidth.
double domain_area(const ProfileParams& p);

/// Column-structured triangulation of the swimmer planform. Nodes sit on
/// y = 0 and y = +-spine_thickness/2 in every column so the spine band is
/// resolved exactly; inside the band the vertical spacing is
/// target_edge_length * spine_refinement_factor. The mesh is built for y >= 0
/// and mirrored, so it is exactly symmetric about the body axis.
SwimmerMesh generate_mesh(const ProfileParams& p, double target_edge_length,
                          double spine_refinement_factor);

/// Structured nx-by-ny rectangle [0,length] x [-height/2, height/2], all Soft,
/// with alternating diagonals.
SwimmerMesh rectangle_mesh(double length, double height, int nx, int ny);

/// Mean distance by which Spine triangle centroids stick out of the spine band.
double spine_labeling_error(const SwimmerMesh& m, const ProfileParams& p);

double mesh_area(const SwimmerMesh& m);

/// Recomputes rest areas from vertex positions.
void update_rest_areas(SwimmerMesh& m);

}  // namespace swimsim
