#pragma once

#include "swimsim/io.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace swimsim {

/// A dataset entry. Exactly one of angle_csv / markers_csv is set. Voltage
/// and frequency come either inline or from the metadata sidecar.
struct DatasetSpec {
    std::string id;
    fs::path angle_csv;
    fs::path markers_csv;
    fs::path metadata;
    std::optional<double> voltage;
    std::optional<double> frequency;
    /// Mean subtraction and time shift. Defaults to true for marker data
    /// and false for angle CSVs, which are stored already processed.
    std::optional<bool> center;
};

struct MeshSpec {
    double edge_length = 0.0014;
    double spine_refinement = 0.25;
    /// Optional prebuilt mesh in the text format; overrides generation.
    fs::path file;
};

struct ExperimentConfig {
    ProfileParams profile;
    MeshSpec mesh;
    SimConfig sim;
    /// Use the spine material for the Soft (head) region.
    bool stiff_head = false;
    ActuationParams actuation;
    AmplitudeTable amplitude_table;
    std::vector<DatasetSpec> datasets;
    std::vector<DatasetSpec> validation_datasets;
    OptimizerConfig optimizer;
    std::uint64_t seed = 0;
    fs::path output_dir = "swimsim_out";

    /// Range checks on every section plus existence of referenced files.
    void validate() const;
    /// Material table with stiff_head applied.
    SimConfig effective_sim() const;
};

/// Parses a config object. Unknown keys and wrongly typed values throw
/// InputError naming the offending key. Relative paths resolve against
/// base_dir.
ExperimentConfig config_from_json(const Json& j, const fs::path& base_dir = {});
/// Full config with every default spelled out.
Json config_to_json(const ExperimentConfig& cfg);
/// Throws InputError("config not found: ...") when the file is missing.
ExperimentConfig load_config(const fs::path& path);
/// FNV-1a of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

SwimmerMesh build_mesh(const ExperimentConfig& cfg);
/// Reads and, if requested, centers one dataset.
Dataset load_dataset(const DatasetSpec& spec);
std::vector<Dataset> load_datasets(const std::vector<DatasetSpec>& specs);

}  // namespace swimsim
