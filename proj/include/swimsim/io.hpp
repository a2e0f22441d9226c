#pragma once

#include "swimsim/adjoint.hpp"
#include "swimsim/fem.hpp"
#include "swimsim/geometry.hpp"
#include "swimsim/sysid.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace swimsim {

using Json = nlohmann::json;
namespace fs = std::filesystem;

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Mesh text format:
//   swimsim-mesh 1
//   <num_vertices> <num_triangles>
//   x y                      (one line per vertex)
//   i j k label fx fy        (one line per triangle, label by region name)
void write_mesh_text(std::ostream& os, const SwimmerMesh& mesh);
SwimmerMesh read_mesh_text(std::istream& is);
void save_mesh_text(const fs::path& path, const SwimmerMesh& mesh);
SwimmerMesh load_mesh_text(const fs::path& path);

Json mesh_to_json(const SwimmerMesh& mesh);
SwimmerMesh mesh_from_json(const Json& j);

/// One row per (frame, vertex): t,vertex_id,x,y, grouped by frame.
void write_trajectory_csv(std::ostream& os, std::span<const SimState> trajectory);

// Binary trajectory: 8-byte magic "SWSTRAJ1", uint32 frame count, uint32
// vertex count, then per frame t followed by x0 y0 x1 y1 ...; all values
// little-endian, doubles in IEEE-754 binary64.
void write_trajectory_binary(std::ostream& os, std::span<const SimState> trajectory);
/// Positions and times only; velocities are left empty.
std::vector<SimState> read_trajectory_binary(std::istream& is);

/// Header `t,sin_theta`.
void write_angle_csv(std::ostream& os, const AngleTrace& trace);
AngleTrace read_angle_csv(std::istream& is);
AngleTrace load_angle_csv(const fs::path& path);

/// Header `t,head_x,head_y,mid_x,mid_y,tail_x,tail_y`. Voltage and frequency
/// are left at zero; they come from the sidecar.
void write_marker_csv(std::ostream& os, const MarkerTrace& markers);
MarkerTrace read_marker_csv(std::istream& is);

/// Sidecar metadata `{"voltage_v": ..., "frequency_hz": ...}`.
struct DatasetMetadata {
    double voltage = 0.0;
    double frequency = 0.0;
};
DatasetMetadata load_metadata(const fs::path& path);
Json metadata_to_json(const DatasetMetadata& meta);

Json fit_to_json(const FitResult& fit, const std::string& config_hash);
FitResult fit_from_json(const Json& j);
FitResult load_fit(const fs::path& path);

Json validation_to_json(const ValidationReport& report);
Json gradient_check_to_json(const GradientCheck& check);

std::string read_text_file(const fs::path& path);
/// Writes through a temporary sibling and renames it into place.
void write_text_file(const fs::path& path, std::string_view contents);
/// Canonical JSON text (sorted keys, two-space indent, trailing newline).
std::string dump_json(const Json& j);

}  // namespace swimsim
