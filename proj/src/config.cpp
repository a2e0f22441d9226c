#include "swimsim/config.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace swimsim {

namespace {

// Reads fields of one JSON object and rejects anything left unread.
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InputError(where() + " must be a JSON object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    const Json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void num(const char* key, double& out) {
        if (!has(key)) return;
        const Json& v = raw(key);
        if (!v.is_number()) throw InputError(where(key) + " must be a number");
        out = v.get<double>();
    }

    void integer(const char* key, int& out) {
        if (!has(key)) return;
        const Json& v = raw(key);
        if (!v.is_number_integer()) throw InputError(where(key) + " must be an integer");
        out = v.get<int>();
    }

    void boolean(const char* key, bool& out) {
        if (!has(key)) return;
        const Json& v = raw(key);
        if (!v.is_boolean()) throw InputError(where(key) + " must be true or false");
        out = v.get<bool>();
    }

    void string(const char* key, std::string& out) {
        if (!has(key)) return;
        const Json& v = raw(key);
        if (!v.is_string()) throw InputError(where(key) + " must be a string");
        out = v.get<std::string>();
    }

    void vec2(const char* key, Vec2& out) {
        if (!has(key)) return;
        const Json& v = raw(key);
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw InputError(where(key) + " must be a [x, y] pair");
        out = Vec2(v[0].get<double>(), v[1].get<double>());
    }

    Section sub(const char* key) { return Section(raw(key), where(key)); }

    std::string where(const std::string& key = {}) const { return key.empty() ? path_ : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw InputError("unknown config key '" + where(it.key()) + "'");
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

void read_material(Section s, Material& m) {
    s.num("youngs_modulus", m.youngs_modulus);
    s.num("poisson_ratio", m.poisson_ratio);
    s.num("density", m.density);
    s.num("damping", m.damping);
    s.finish();
}

Json material_json(const Material& m) {
    return {{"youngs_modulus", m.youngs_modulus},
            {"poisson_ratio", m.poisson_ratio},
            {"density", m.density},
            {"damping", m.damping}};
}

DatasetSpec read_dataset(Section s, const fs::path& base) {
    DatasetSpec d;
    s.string("id", d.id);
    std::string angle, markers, meta;
    s.string("angle_csv", angle);
    s.string("markers_csv", markers);
    s.string("metadata", meta);
    d.angle_csv = resolve(base, angle);
    d.markers_csv = resolve(base, markers);
    d.metadata = resolve(base, meta);
    if (s.has("voltage_v")) {
        double v = 0.0;
        s.num("voltage_v", v);
        d.voltage = v;
    }
    if (s.has("frequency_hz")) {
        double f = 0.0;
        s.num("frequency_hz", f);
        d.frequency = f;
    }
    if (s.has("center")) {
        bool c = false;
        s.boolean("center", c);
        d.center = c;
    }
    s.finish();
    if (d.id.empty()) throw InputError(s.where() + ": missing 'id'");
    if (angle.empty() == markers.empty())
        throw InputError(s.where() + ": exactly one of 'angle_csv' and 'markers_csv' is required");
    return d;
}

std::vector<DatasetSpec> read_datasets(Section& parent, const char* key, const fs::path& base) {
    std::vector<DatasetSpec> out;
    if (!parent.has(key)) return out;
    const Json& arr = parent.raw(key);
    if (!arr.is_array()) throw InputError(parent.where(key) + " must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i)
        out.push_back(read_dataset(Section(arr[i], parent.where(key) + "[" + std::to_string(i) + "]"), base));
    return out;
}

Json dataset_json(const DatasetSpec& d) {
    Json j = {{"id", d.id}};
    if (!d.angle_csv.empty()) j["angle_csv"] = d.angle_csv.generic_string();
    if (!d.markers_csv.empty()) j["markers_csv"] = d.markers_csv.generic_string();
    if (!d.metadata.empty()) j["metadata"] = d.metadata.generic_string();
    if (d.voltage) j["voltage_v"] = *d.voltage;
    if (d.frequency) j["frequency_hz"] = *d.frequency;
    if (d.center) j["center"] = *d.center;
    return j;
}

void require_file(const fs::path& p, const std::string& what) {
    if (!p.empty() && !fs::is_regular_file(p)) throw InputError(what + " not found: " + p.string());
}

}  // namespace

void ExperimentConfig::validate() const {
    profile.validate();
    if (!profile.closed()) throw InputError("profile: polynomial must close (<= 0.05) at both ends");
    if (!(mesh.edge_length > 0.0)) throw InputError("mesh: edge_length must be positive");
    if (!(mesh.spine_refinement > 0.0 && mesh.spine_refinement <= 1.0))
        throw InputError("mesh: spine_refinement must lie in (0, 1]");
    require_file(mesh.file, "mesh file");
    sim.validate();
    actuation.validate();
    amplitude_table.validate();
    optimizer.validate();
    for (const auto* list : {&datasets, &validation_datasets}) {
        std::set<std::string> local;
        for (const auto& d : *list) {
            if (!local.insert(d.id).second) throw InputError("duplicate dataset id '" + d.id + "'");
            require_file(d.angle_csv, "dataset '" + d.id + "' angle CSV");
            require_file(d.markers_csv, "dataset '" + d.id + "' marker CSV");
            require_file(d.metadata, "dataset '" + d.id + "' metadata");
            if (d.metadata.empty() && (!d.voltage || !d.frequency))
                throw InputError("dataset '" + d.id + "': needs voltage_v and frequency_hz or a metadata file");
            if (d.frequency && !(*d.frequency > 0.0))
                throw InputError("dataset '" + d.id + "': frequency_hz must be positive");
        }
    }
    if (output_dir.empty()) throw InputError("output_dir must not be empty");
}

SimConfig ExperimentConfig::effective_sim() const {
    SimConfig s = sim;
    if (stiff_head) s.materials[static_cast<int>(Region::Soft)] = s.material(Region::Spine);
    return s;
}

ExperimentConfig config_from_json(const Json& j, const fs::path& base_dir) {
    ExperimentConfig c;
    Section root(j, "config");

    if (root.has("profile")) {
        Section s = root.sub("profile");
        s.num("length", c.profile.length);
        s.num("max_halfwidth", c.profile.max_halfwidth);
        s.num("tail_length", c.profile.tail_length);
        s.num("spine_thickness", c.profile.spine_thickness);
        s.num("head_length", c.profile.head_length);
        if (s.has("coeffs")) {
            const Json& v = s.raw("coeffs");
            if (!v.is_array() || v.size() != 6) throw InputError(s.where("coeffs") + " must hold 6 numbers");
            for (int k = 0; k < 6; ++k) {
                if (!v[k].is_number()) throw InputError(s.where("coeffs") + " must hold 6 numbers");
                c.profile.coeffs[k] = v[k].get<double>();
            }
        }
        s.finish();
    }

    if (root.has("mesh")) {
        Section s = root.sub("mesh");
        s.num("edge_length", c.mesh.edge_length);
        s.num("spine_refinement", c.mesh.spine_refinement);
        std::string file;
        s.string("file", file);
        c.mesh.file = resolve(base_dir, file);
        s.finish();
    }

    if (root.has("sim")) {
        Section s = root.sub("sim");
        s.num("dt", c.sim.dt);
        s.num("solver_tol", c.sim.solver_tol);
        s.integer("max_newton_iters", c.sim.max_newton_iters);
        s.vec2("gravity", c.sim.gravity);
        s.num("pin_length", c.sim.pin_length);
        s.num("thickness", c.sim.thickness);
        s.boolean("stiff_head", c.stiff_head);
        if (s.has("boundary")) {
            std::string b;
            s.string("boundary", b);
            if (b == "free") c.sim.boundary = Boundary::Free;
            else if (b == "pinned_head") c.sim.boundary = Boundary::PinnedHead;
            else throw InputError(s.where("boundary") + " must be 'free' or 'pinned_head'");
        }
        if (s.has("materials")) {
            Section m = s.sub("materials");
            for (int r = 0; r < kRegionCount; ++r) {
                const std::string name(region_name(static_cast<Region>(r)));
                if (m.has(name.c_str())) read_material(m.sub(name.c_str()), c.sim.materials[r]);
            }
            m.finish();
        }
        s.finish();
    }

    if (root.has("actuation")) {
        Section s = root.sub("actuation");
        s.num("amplitude", c.actuation.amplitude);
        s.num("slope", c.actuation.slope);
        s.num("frequency", c.actuation.frequency);
        s.num("phase_offset", c.actuation.phase_offset);
        s.num("muscle_stiffness", c.actuation.muscle_stiffness);
        s.num("duty", c.actuation.duty);
        if (s.has("amplitude_table")) {
            const Json& arr = s.raw("amplitude_table");
            if (!arr.is_array()) throw InputError(s.where("amplitude_table") + " must be an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Section e(arr[i], s.where("amplitude_table") + "[" + std::to_string(i) + "]");
                double v = 0.0, a = 0.0;
                if (!e.has("voltage_v") || !e.has("amplitude"))
                    throw InputError(e.where() + " needs voltage_v and amplitude");
                e.num("voltage_v", v);
                e.num("amplitude", a);
                e.finish();
                c.amplitude_table.entries.emplace_back(v, a);
            }
        }
        s.finish();
    }

    c.datasets = read_datasets(root, "datasets", base_dir);
    c.validation_datasets = read_datasets(root, "validation_datasets", base_dir);

    if (root.has("optimizer")) {
        Section s = root.sub("optimizer");
        OptimizerConfig& o = c.optimizer;
        s.num("learning_rate_amplitude", o.learning_rate_amplitude);
        s.num("learning_rate_slope", o.learning_rate_slope);
        s.num("beta1", o.beta1);
        s.num("beta2", o.beta2);
        s.num("epsilon", o.epsilon);
        s.integer("max_iterations", o.max_iterations);
        s.num("rel_tol", o.rel_tol);
        s.integer("window", o.window);
        s.num("init_amplitude", o.init_amplitude);
        s.num("init_slope", o.init_slope);
        s.num("slope_scale", o.slope_scale);
        s.num("amplitude_max", o.amplitude_max);
        s.num("slope_min", o.slope_min);
        s.num("slope_max", o.slope_max);
        s.num("smoothing", o.smoothing);
        s.integer("checkpoint_every", o.checkpoint_every);
        s.integer("threads", o.threads);
        s.finish();
    }

    if (root.has("seed")) {
        const Json& v = root.raw("seed");
        if (!v.is_number_unsigned()) throw InputError("config.seed must be a non-negative integer");
        c.seed = v.get<std::uint64_t>();
    }
    if (root.has("output_dir")) {
        std::string out;
        root.string("output_dir", out);
        c.output_dir = resolve(base_dir, out);
    }
    root.finish();
    return c;
}

Json config_to_json(const ExperimentConfig& c) {
    Json materials;
    for (int r = 0; r < kRegionCount; ++r)
        materials[std::string(region_name(static_cast<Region>(r)))] = material_json(c.sim.materials[r]);
    Json table = Json::array();
    for (const auto& [v, a] : c.amplitude_table.entries) table.push_back({{"voltage_v", v}, {"amplitude", a}});
    Json ds = Json::array(), vds = Json::array();
    for (const auto& d : c.datasets) ds.push_back(dataset_json(d));
    for (const auto& d : c.validation_datasets) vds.push_back(dataset_json(d));
    const OptimizerConfig& o = c.optimizer;
    Json mesh = {{"edge_length", c.mesh.edge_length}, {"spine_refinement", c.mesh.spine_refinement}};
    if (!c.mesh.file.empty()) mesh["file"] = c.mesh.file.generic_string();
    return {
        {"profile",
         {{"length", c.profile.length},
          {"max_halfwidth", c.profile.max_halfwidth},
          {"tail_length", c.profile.tail_length},
          {"spine_thickness", c.profile.spine_thickness},
          {"head_length", c.profile.head_length},
          {"coeffs", c.profile.coeffs}}},
        {"mesh", mesh},
        {"sim",
         {{"dt", c.sim.dt},
          {"solver_tol", c.sim.solver_tol},
          {"max_newton_iters", c.sim.max_newton_iters},
          {"gravity", {c.sim.gravity.x(), c.sim.gravity.y()}},
          {"boundary", c.sim.boundary == Boundary::Free ? "free" : "pinned_head"},
          {"pin_length", c.sim.pin_length},
          {"thickness", c.sim.thickness},
          {"stiff_head", c.stiff_head},
          {"materials", materials}}},
        {"actuation",
         {{"amplitude", c.actuation.amplitude},
          {"slope", c.actuation.slope},
          {"frequency", c.actuation.frequency},
          {"phase_offset", c.actuation.phase_offset},
          {"muscle_stiffness", c.actuation.muscle_stiffness},
          {"duty", c.actuation.duty},
          {"amplitude_table", table}}},
        {"datasets", ds},
        {"validation_datasets", vds},
        {"optimizer",
         {{"learning_rate_amplitude", o.learning_rate_amplitude},
          {"learning_rate_slope", o.learning_rate_slope},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"epsilon", o.epsilon},
          {"max_iterations", o.max_iterations},
          {"rel_tol", o.rel_tol},
          {"window", o.window},
          {"init_amplitude", o.init_amplitude},
          {"init_slope", o.init_slope},
          {"slope_scale", o.slope_scale},
          {"amplitude_max", o.amplitude_max},
          {"slope_min", o.slope_min},
          {"slope_max", o.slope_max},
          {"smoothing", o.smoothing},
          {"checkpoint_every", o.checkpoint_every},
          {"threads", o.threads}}},
        {"seed", c.seed},
        {"output_dir", c.output_dir.generic_string()},
    };
}

ExperimentConfig load_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw InputError("config not found: " + path.string());
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

std::string config_hash(const ExperimentConfig& cfg) {
    Json j = config_to_json(cfg);
    // The output location does not change the result.
    j.erase("output_dir");
    return hex64(fnv1a64(j.dump()));
}

SwimmerMesh build_mesh(const ExperimentConfig& cfg) {
    if (!cfg.mesh.file.empty()) return load_mesh_text(cfg.mesh.file);
    return generate_mesh(cfg.profile, cfg.mesh.edge_length, cfg.mesh.spine_refinement);
}

Dataset load_dataset(const DatasetSpec& spec) {
    try {
        Dataset ds;
        ds.id = spec.id;
        DatasetMetadata meta;
        if (!spec.metadata.empty()) meta = load_metadata(spec.metadata);
        ds.voltage = spec.voltage.value_or(meta.voltage);
        ds.frequency = spec.frequency.value_or(meta.frequency);
        if (!(ds.frequency > 0.0)) throw InputError("frequency must be positive");
        bool center = false;
        if (!spec.markers_csv.empty()) {
            auto text = read_text_file(spec.markers_csv);
            std::istringstream is(text);
            MarkerTrace m = read_marker_csv(is);
            m.voltage = ds.voltage;
            m.frequency = ds.frequency;
            ds.trace = angle_trace(m);
            center = spec.center.value_or(true);
        } else {
            ds.trace = load_angle_csv(spec.angle_csv);
            center = spec.center.value_or(false);
        }
        if (ds.trace.size() < 2) throw InputError("need at least 2 frames");
        if (center) ds.trace = preprocess(ds.trace);
        return ds;
    } catch (const InputError& e) {
        throw InputError("dataset '" + spec.id + "': " + e.what());
    }
}

std::vector<Dataset> load_datasets(const std::vector<DatasetSpec>& specs) {
    std::vector<Dataset> out;
    for (const auto& s : specs) out.push_back(load_dataset(s));
    return out;
}

}  // namespace swimsim
