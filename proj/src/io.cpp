#include "swimsim/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace swimsim {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw InputError(where + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Rows of a CSV with the exact expected header. Blank lines are skipped.
std::vector<std::vector<double>> read_csv(std::istream& is, const std::vector<std::string>& header,
                                          const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) throw InputError(what + ": empty file");
    auto cols = split(trim(line), ',');
    bool ok = cols.size() == header.size();
    for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = trim(cols[i]) == header[i];
    if (!ok) {
        std::string expect;
        for (const auto& h : header) expect += (expect.empty() ? "" : ",") + h;
        throw InputError(what + ": expected header '" + expect + "'");
    }
    std::vector<std::vector<double>> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        auto t = trim(line);
        if (t.empty()) continue;
        auto fields = split(t, ',');
        const std::string where = what + " line " + std::to_string(lineno);
        if (fields.size() != header.size())
            throw InputError(where + ": expected " + std::to_string(header.size()) + " fields");
        std::vector<double> row;
        for (auto f : fields) row.push_back(parse_double(f, where));
        rows.push_back(std::move(row));
    }
    return rows;
}

template <class T>
void put_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw InputError("trajectory: truncated binary file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
    T v;
    std::memcpy(&v, b, sizeof(T));
    return v;
}

constexpr char kTrajectoryMagic[8] = {'S', 'W', 'S', 'T', 'R', 'A', 'J', '1'};

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream f(path, mode);
    if (!f) throw InputError("cannot open '" + path.string() + "'");
    return f;
}

double number(const Json& j, const char* key, const std::string& what) {
    if (!j.contains(key) || !j.at(key).is_number()) throw InputError(what + ": missing number '" + key + "'");
    return j.at(key).get<double>();
}

}  // namespace

void write_mesh_text(std::ostream& os, const SwimmerMesh& mesh) {
    os << "swimsim-mesh 1\n" << mesh.num_vertices() << ' ' << mesh.num_triangles() << '\n';
    for (const auto& v : mesh.vertices) os << fmt(v.x()) << ' ' << fmt(v.y()) << '\n';
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const auto& t = mesh.triangles[e];
        os << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << region_name(mesh.region[e]) << ' '
           << fmt(mesh.fiber[e].x()) << ' ' << fmt(mesh.fiber[e].y()) << '\n';
    }
}

SwimmerMesh read_mesh_text(std::istream& is) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "swimsim-mesh" || version != 1)
        throw InputError("mesh: missing 'swimsim-mesh 1' header");
    long nv = -1, nt = -1;
    if (!(is >> nv >> nt) || nv < 3 || nt < 1) throw InputError("mesh: bad vertex/triangle counts");
    SwimmerMesh m;
    m.vertices.resize(nv);
    for (long i = 0; i < nv; ++i) {
        std::string x, y;
        if (!(is >> x >> y)) throw InputError("mesh: truncated vertex list");
        m.vertices[i] = Vec2(parse_double(x, "mesh vertex"), parse_double(y, "mesh vertex"));
    }
    for (long e = 0; e < nt; ++e) {
        std::array<long, 3> t{};
        std::string label, fx, fy;
        if (!(is >> t[0] >> t[1] >> t[2] >> label >> fx >> fy)) throw InputError("mesh: truncated triangle list");
        for (long k : t)
            if (k < 0 || k >= nv) throw InputError("mesh: triangle " + std::to_string(e) + " references a missing vertex");
        m.triangles.push_back({static_cast<int>(t[0]), static_cast<int>(t[1]), static_cast<int>(t[2])});
        m.region.push_back(parse_region(label));
        m.fiber.emplace_back(parse_double(fx, "mesh fiber"), parse_double(fy, "mesh fiber"));
    }
    update_rest_areas(m);
    m.validate();
    return m;
}

void save_mesh_text(const fs::path& path, const SwimmerMesh& mesh) {
    std::ostringstream os;
    write_mesh_text(os, mesh);
    write_text_file(path, os.str());
}

SwimmerMesh load_mesh_text(const fs::path& path) {
    auto f = open_in(path);
    return read_mesh_text(f);
}

Json mesh_to_json(const SwimmerMesh& mesh) {
    Json verts = Json::array(), tris = Json::array();
    for (const auto& v : mesh.vertices) verts.push_back({v.x(), v.y()});
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const auto& t = mesh.triangles[e];
        tris.push_back({{"vertices", {t[0], t[1], t[2]}},
                        {"label", std::string(region_name(mesh.region[e]))},
                        {"fiber", {mesh.fiber[e].x(), mesh.fiber[e].y()}},
                        {"rest_area", mesh.rest_area[e]}});
    }
    return {{"vertices", verts}, {"triangles", tris}};
}

SwimmerMesh mesh_from_json(const Json& j) {
    try {
        SwimmerMesh m;
        for (const auto& v : j.at("vertices")) m.vertices.emplace_back(v.at(0).get<double>(), v.at(1).get<double>());
        for (const auto& t : j.at("triangles")) {
            const auto& idx = t.at("vertices");
            std::array<int, 3> tri{idx.at(0).get<int>(), idx.at(1).get<int>(), idx.at(2).get<int>()};
            for (int k : tri)
                if (k < 0 || k >= m.num_vertices()) throw InputError("mesh: triangle references a missing vertex");
            m.triangles.push_back(tri);
            m.region.push_back(parse_region(t.at("label").get<std::string>()));
            m.fiber.emplace_back(t.at("fiber").at(0).get<double>(), t.at("fiber").at(1).get<double>());
        }
        update_rest_areas(m);
        m.validate();
        return m;
    } catch (const Json::exception& e) {
        throw InputError(std::string("mesh JSON: ") + e.what());
    }
}

void write_trajectory_csv(std::ostream& os, std::span<const SimState> trajectory) {
    os << "t,vertex_id,x,y\n";
    for (const auto& s : trajectory) {
        const std::string t = fmt(s.t);
        for (int i = 0; i < s.num_vertices(); ++i)
            os << t << ',' << i << ',' << fmt(s.q(2 * i)) << ',' << fmt(s.q(2 * i + 1)) << '\n';
    }
}

void write_trajectory_binary(std::ostream& os, std::span<const SimState> trajectory) {
    const std::uint32_t nv = trajectory.empty() ? 0u : static_cast<std::uint32_t>(trajectory[0].num_vertices());
    os.write(kTrajectoryMagic, sizeof kTrajectoryMagic);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(trajectory.size()));
    put_le<std::uint32_t>(os, nv);
    for (const auto& s : trajectory) {
        if (static_cast<std::uint32_t>(s.num_vertices()) != nv)
            throw InputError("trajectory: frames have different vertex counts");
        put_le<double>(os, s.t);
        for (Eigen::Index k = 0; k < s.q.size(); ++k) put_le<double>(os, s.q(k));
    }
}

std::vector<SimState> read_trajectory_binary(std::istream& is) {
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kTrajectoryMagic, sizeof magic) != 0)
        throw InputError("trajectory: bad magic");
    const auto nf = get_le<std::uint32_t>(is);
    const auto nv = get_le<std::uint32_t>(is);
    std::vector<SimState> out(nf);
    for (auto& s : out) {
        s.t = get_le<double>(is);
        s.q.resize(2 * static_cast<Eigen::Index>(nv));
        for (Eigen::Index k = 0; k < s.q.size(); ++k) s.q(k) = get_le<double>(is);
    }
    return out;
}

void write_angle_csv(std::ostream& os, const AngleTrace& trace) {
    os << "t,sin_theta\n";
    for (std::size_t k = 0; k < trace.size(); ++k)
        os << fmt(trace.timestamps[k]) << ',' << fmt(trace.sin_theta[k]) << '\n';
}

AngleTrace read_angle_csv(std::istream& is) {
    AngleTrace tr;
    for (const auto& row : read_csv(is, {"t", "sin_theta"}, "angle CSV")) {
        tr.timestamps.push_back(row[0]);
        tr.sin_theta.push_back(row[1]);
    }
    tr.validate();
    return tr;
}

AngleTrace load_angle_csv(const fs::path& path) {
    auto f = open_in(path);
    try {
        return read_angle_csv(f);
    } catch (const InputError& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_marker_csv(std::ostream& os, const MarkerTrace& m) {
    os << "t,head_x,head_y,mid_x,mid_y,tail_x,tail_y\n";
    for (std::size_t k = 0; k < m.timestamps.size(); ++k)
        os << fmt(m.timestamps[k]) << ',' << fmt(m.head[k].x()) << ',' << fmt(m.head[k].y()) << ','
           << fmt(m.middle[k].x()) << ',' << fmt(m.middle[k].y()) << ',' << fmt(m.tail[k].x()) << ','
           << fmt(m.tail[k].y()) << '\n';
}

MarkerTrace read_marker_csv(std::istream& is) {
    MarkerTrace m;
    for (const auto& r : read_csv(is, {"t", "head_x", "head_y", "mid_x", "mid_y", "tail_x", "tail_y"}, "marker CSV")) {
        m.timestamps.push_back(r[0]);
        m.head.emplace_back(r[1], r[2]);
        m.middle.emplace_back(r[3], r[4]);
        m.tail.emplace_back(r[5], r[6]);
    }
    return m;
}

DatasetMetadata load_metadata(const fs::path& path) {
    Json j;
    try {
        j = Json::parse(read_text_file(path));
    } catch (const Json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw InputError(path.string() + ": metadata must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "voltage_v" && it.key() != "frequency_hz")
            throw InputError(path.string() + ": unknown key '" + it.key() + "'");
    DatasetMetadata meta{number(j, "voltage_v", path.string()), number(j, "frequency_hz", path.string())};
    if (!(meta.frequency > 0.0)) throw InputError(path.string() + ": frequency_hz must be positive");
    return meta;
}

Json metadata_to_json(const DatasetMetadata& meta) {
    return {{"voltage_v", meta.voltage}, {"frequency_hz", meta.frequency}};
}

namespace {

Json errors_to_json(const std::vector<DatasetError>& errors) {
    Json arr = Json::array();
    for (const auto& e : errors)
        arr.push_back({{"id", e.id}, {"voltage_v", e.voltage}, {"frequency_hz", e.frequency}, {"mae", e.mae}});
    return arr;
}

std::vector<DatasetError> errors_from_json(const Json& arr) {
    std::vector<DatasetError> out;
    for (const auto& e : arr)
        out.push_back({e.at("id").get<std::string>(), e.at("voltage_v").get<double>(),
                       e.at("frequency_hz").get<double>(), e.at("mae").get<double>()});
    return out;
}

}  // namespace

Json fit_to_json(const FitResult& fit, const std::string& config_hash) {
    Json table = Json::array();
    for (const auto& [v, a] : fit.amplitude_table.entries) table.push_back({{"voltage_v", v}, {"amplitude", a}});
    return {{"format", "swimsim-fit"},
            {"version", 1},
            {"amplitude_table", table},
            {"slope", fit.slope},
            {"train_mae", fit.train_mae},
            {"per_dataset_mae", errors_to_json(fit.per_dataset_mae)},
            {"iterations", fit.iterations},
            {"loss_history", fit.loss_history},
            {"best_loss", fit.best_loss},
            {"keypoints", {{"head", fit.keypoints.head}, {"middle", fit.keypoints.middle}, {"tail", fit.keypoints.tail}}},
            {"config_hash", config_hash}};
}

FitResult fit_from_json(const Json& j) {
    try {
        if (j.at("format").get<std::string>() != "swimsim-fit") throw InputError("fit: not a swimsim fit file");
        FitResult fit;
        for (const auto& e : j.at("amplitude_table"))
            fit.amplitude_table.entries.emplace_back(e.at("voltage_v").get<double>(), e.at("amplitude").get<double>());
        fit.amplitude_table.validate();
        fit.slope = j.at("slope").get<double>();
        if (!(fit.slope > 0.0)) throw InputError("fit: slope must be positive");
        fit.train_mae = j.at("train_mae").get<double>();
        fit.per_dataset_mae = errors_from_json(j.at("per_dataset_mae"));
        fit.iterations = j.at("iterations").get<int>();
        fit.loss_history = j.at("loss_history").get<std::vector<double>>();
        fit.best_loss = j.at("best_loss").get<double>();
        const auto& kp = j.at("keypoints");
        fit.keypoints = {kp.at("head").get<int>(), kp.at("middle").get<int>(), kp.at("tail").get<int>()};
        return fit;
    } catch (const Json::exception& e) {
        throw InputError(std::string("fit: ") + e.what());
    }
}

FitResult load_fit(const fs::path& path) {
    if (!fs::exists(path)) throw InputError("fit file not found: " + path.string());
    try {
        return fit_from_json(Json::parse(read_text_file(path)));
    } catch (const Json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

Json validation_to_json(const ValidationReport& report) {
    Json rows = errors_to_json(report.per_dataset);
    for (std::size_t i = 0; i < rows.size() && i < report.extrapolated.size(); ++i)
        rows[i]["extrapolated"] = static_cast<bool>(report.extrapolated[i]);
    return {{"per_dataset", rows}, {"aggregate_mae", report.aggregate_mae}};
}

Json gradient_check_to_json(const GradientCheck& check) {
    auto entry = [](const GradientCheckEntry& e) {
        return Json{{"adjoint", e.adjoint}, {"finite_difference", e.finite_difference},
                    {"relative_error", e.relative_error}};
    };
    return {{"loss", check.loss}, {"amplitude", entry(check.amplitude)}, {"slope", entry(check.slope)}};
}

std::string read_text_file(const fs::path& path) {
    auto f = open_in(path, std::ios::in | std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, std::string_view contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::out | std::ios::binary | std::ios::trunc);
        if (!f) throw InputError("cannot write '" + tmp.string() + "'");
        f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!f) throw InputError("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, path);
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace swimsim
