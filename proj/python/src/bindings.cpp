#include "swimsim/config.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace swimsim;

namespace {

Muscle parse_muscle(const std::string& name) {
    if (name == "upper") return Muscle::Upper;
    if (name == "lower") return Muscle::Lower;
    throw InputError("muscle must be 'upper' or 'lower'");
}

Eigen::MatrixXd points(const std::vector<Vec2>& v) {
    Eigen::MatrixXd m(v.size(), 2);
    for (std::size_t i = 0; i < v.size(); ++i) m.row(i) = v[i].transpose();
    return m;
}

std::vector<Vec2> to_points(const Eigen::MatrixXd& m) {
    if (m.cols() != 2) throw InputError("expected an (N, 2) array");
    std::vector<Vec2> v(m.rows());
    for (Eigen::Index i = 0; i < m.rows(); ++i) v[i] = m.row(i).transpose();
    return v;
}

py::dict trajectory_dict(const std::vector<SimState>& traj) {
    const Eigen::Index n = traj.empty() ? 0 : traj[0].q.size();
    Eigen::VectorXd t(traj.size());
    Eigen::MatrixXd q(traj.size(), n), v(traj.size(), n);
    for (std::size_t k = 0; k < traj.size(); ++k) {
        t(k) = traj[k].t;
        q.row(k) = traj[k].q.transpose();
        v.row(k) = traj[k].v.transpose();
    }
    py::dict d;
    d["t"] = t;
    d["q"] = q;
    d["v"] = v;
    return d;
}

py::dict check_dict(const GradientCheck& c) {
    auto entry = [](const GradientCheckEntry& e) {
        py::dict d;
        d["adjoint"] = e.adjoint;
        d["finite_difference"] = e.finite_difference;
        d["relative_error"] = e.relative_error;
        return d;
    };
    py::dict d;
    d["loss"] = c.loss;
    d["amplitude"] = entry(c.amplitude);
    d["slope"] = entry(c.slope);
    return d;
}

}  // namespace

PYBIND11_MODULE(_swimsim, m) {
    m.doc() = "2D FEM soft swimmer simulation, adjoint gradients and system identification";

    static py::exception<InputError> input_error(m, "InputError", PyExc_ValueError);
    static py::exception<NumericalError> numerical_error(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const InputError& e) {
            py::set_error(input_error, e.what());
        } catch (const NumericalError& e) {
            py::set_error(numerical_error, e.what());
        }
    });

    // geometry
    py::class_<ProfileParams>(m, "ProfileParams")
        .def(py::init<>())
        .def_readwrite("length", &ProfileParams::length)
        .def_readwrite("max_halfwidth", &ProfileParams::max_halfwidth)
        .def_readwrite("tail_length", &ProfileParams::tail_length)
        .def_readwrite("spine_thickness", &ProfileParams::spine_thickness)
        .def_readwrite("coeffs", &ProfileParams::coeffs)
        .def_readwrite("head_length", &ProfileParams::head_length)
        .def("validate", &ProfileParams::validate)
        .def("closed", &ProfileParams::closed);

    py::class_<SwimmerMesh>(m, "SwimmerMesh")
        .def(py::init<>())
        .def_property_readonly("vertices", [](const SwimmerMesh& s) { return points(s.vertices); })
        .def_property_readonly("triangles",
                               [](const SwimmerMesh& s) {
                                   Eigen::MatrixXi t(s.triangles.size(), 3);
                                   for (std::size_t e = 0; e < s.triangles.size(); ++e)
                                       for (int k = 0; k < 3; ++k) t(e, k) = s.triangles[e][k];
                                   return t;
                               })
        .def_property_readonly("regions",
                               [](const SwimmerMesh& s) {
                                   std::vector<std::string> r;
                                   for (auto x : s.region) r.emplace_back(region_name(x));
                                   return r;
                               })
        .def_property_readonly("rest_area", [](const SwimmerMesh& s) {
            return Eigen::Map<const Eigen::VectorXd>(s.rest_area.data(), s.rest_area.size()).eval();
        })
        .def_property_readonly("fiber", [](const SwimmerMesh& s) { return points(s.fiber); })
        .def_property_readonly("num_vertices", &SwimmerMesh::num_vertices)
        .def_property_readonly("num_triangles", &SwimmerMesh::num_triangles)
        .def("validate", &SwimmerMesh::validate)
        .def("to_json", [](const SwimmerMesh& s) { return mesh_to_json(s).dump(); })
        .def("to_text", [](const SwimmerMesh& s) {
            std::ostringstream os;
            write_mesh_text(os, s);
            return os.str();
        });

    m.def("profile_halfwidth", &profile_halfwidth, py::arg("u"), py::arg("profile"));
    m.def("domain_area", &domain_area, py::arg("profile"));
    m.def("generate_mesh", &generate_mesh, py::arg("profile"), py::arg("target_edge_length"),
          py::arg("spine_refinement_factor"));
    m.def("rectangle_mesh", &rectangle_mesh, py::arg("length"), py::arg("height"), py::arg("nx"), py::arg("ny"));
    m.def("spine_labeling_error", &spine_labeling_error, py::arg("mesh"), py::arg("profile"));
    m.def("mesh_area", &mesh_area, py::arg("mesh"));
    m.def("mesh_from_text", [](const std::string& text) {
        std::istringstream is(text);
        return read_mesh_text(is);
    });

    // fem
    py::class_<Material>(m, "Material")
        .def(py::init<>())
        .def(py::init([](double E, double nu, double rho, double damping) { return Material{E, nu, rho, damping}; }),
             py::arg("youngs_modulus"), py::arg("poisson_ratio") = 0.45, py::arg("density") = 900.0,
             py::arg("damping") = 0.01)
        .def_readwrite("youngs_modulus", &Material::youngs_modulus)
        .def_readwrite("poisson_ratio", &Material::poisson_ratio)
        .def_readwrite("density", &Material::density)
        .def_readwrite("damping", &Material::damping)
        .def("mu", &Material::mu)
        .def("lam", &Material::lambda);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("dt", &SimConfig::dt)
        .def_readwrite("solver_tol", &SimConfig::solver_tol)
        .def_readwrite("max_newton_iters", &SimConfig::max_newton_iters)
        .def_readwrite("materials", &SimConfig::materials)
        .def_readwrite("gravity", &SimConfig::gravity)
        .def_property(
            "pinned_head", [](const SimConfig& c) { return c.boundary == Boundary::PinnedHead; },
            [](SimConfig& c, bool pinned) { c.boundary = pinned ? Boundary::PinnedHead : Boundary::Free; })
        .def_readwrite("pin_length", &SimConfig::pin_length)
        .def_readwrite("thickness", &SimConfig::thickness)
        .def("validate", &SimConfig::validate);

    m.def("elastic_energy", &elastic_energy, py::arg("mesh"), py::arg("q"), py::arg("cfg"));
    m.def("rest_positions", [](const SwimmerMesh& mesh) { return rest_state(mesh).q; });
    m.def(
        "simulate",
        [](const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act, double duration,
           double smoothing) {
            py::gil_scoped_release release;
            auto traj = simulate(mesh, cfg, act, duration, smoothing);
            py::gil_scoped_acquire acquire;
            return trajectory_dict(traj);
        },
        py::arg("mesh"), py::arg("cfg"), py::arg("act"), py::arg("duration"), py::arg("smoothing") = 0.0,
        "Trajectory from rest as a dict with 't' (F,), 'q' and 'v' (F, 2N).");

    // actuation
    py::class_<ActuationParams>(m, "ActuationParams")
        .def(py::init<>())
        .def_readwrite("amplitude", &ActuationParams::amplitude)
        .def_readwrite("slope", &ActuationParams::slope)
        .def_readwrite("frequency", &ActuationParams::frequency)
        .def_readwrite("phase_offset", &ActuationParams::phase_offset)
        .def_readwrite("muscle_stiffness", &ActuationParams::muscle_stiffness)
        .def_readwrite("duty", &ActuationParams::duty)
        .def("validate", &ActuationParams::validate)
        .def("period", &ActuationParams::period);

    m.def(
        "activation_signal",
        [](double t, const ActuationParams& p, const std::string& muscle, double smoothing) {
            ActivationSample s = activation_signal(t, p, parse_muscle(muscle), smoothing);
            return py::make_tuple(s.value, s.d_amplitude, s.d_slope);
        },
        py::arg("t"), py::arg("params"), py::arg("muscle") = "upper", py::arg("smoothing") = 0.0,
        "(a, da/dA, da/ds) at time t.");
    m.def("muscle_energy", &muscle_energy, py::arg("F"), py::arg("fiber"), py::arg("activation"),
          py::arg("stiffness"), py::arg("area"));
    m.def(
        "interpolate_amplitude",
        [](double voltage, const std::vector<std::pair<double, double>>& table) {
            auto r = interpolate_amplitude(voltage, AmplitudeTable{table});
            return py::make_tuple(r.amplitude, r.extrapolated);
        },
        py::arg("voltage"), py::arg("table"));

    // observable
    m.def("bending_angle", &bending_angle, py::arg("head"), py::arg("middle"), py::arg("tail"));
    py::class_<AngleTrace>(m, "AngleTrace")
        .def(py::init<>())
        .def(py::init([](std::vector<double> t, std::vector<double> s) {
                 AngleTrace a{std::move(t), std::move(s), false};
                 a.validate();
                 return a;
             }),
             py::arg("timestamps"), py::arg("sin_theta"))
        .def_readwrite("timestamps", &AngleTrace::timestamps)
        .def_readwrite("sin_theta", &AngleTrace::sin_theta)
        .def_readwrite("centered", &AngleTrace::centered)
        .def("__len__", &AngleTrace::size);
    m.def("preprocess", &preprocess, py::arg("trace"));
    m.def(
        "marker_angle_trace",
        [](const std::vector<double>& t, const Eigen::MatrixXd& head, const Eigen::MatrixXd& middle,
           const Eigen::MatrixXd& tail) {
            MarkerTrace mt;
            mt.timestamps = t;
            mt.head = to_points(head);
            mt.middle = to_points(middle);
            mt.tail = to_points(tail);
            return angle_trace(mt);
        },
        py::arg("timestamps"), py::arg("head"), py::arg("middle"), py::arg("tail"));

    py::class_<Keypoints>(m, "Keypoints")
        .def_readonly("head", &Keypoints::head)
        .def_readonly("middle", &Keypoints::middle)
        .def_readonly("tail", &Keypoints::tail);
    m.def("choose_keypoints", &choose_keypoints, py::arg("mesh"));

    // adjoint
    py::class_<GradientRequest>(m, "GradientRequest")
        .def(py::init<>())
        .def_readwrite("checkpoint_every", &GradientRequest::checkpoint_every)
        .def_readwrite("smoothing", &GradientRequest::smoothing);
    m.def(
        "simulate_and_grad",
        [](const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act, const AngleTrace& target,
           const GradientRequest& req) {
            GradientResult r;
            {
                py::gil_scoped_release release;
                r = simulate_and_grad(mesh, cfg, act, choose_keypoints(mesh), target, req);
            }
            py::dict d;
            d["loss"] = r.loss;
            d["d_amplitude"] = r.d_loss_d_amplitude.value_or(0.0);
            d["d_slope"] = r.d_loss_d_slope.value_or(0.0);
            d["mae"] = r.mae;
            d["simulated"] = r.simulated;
            return d;
        },
        py::arg("mesh"), py::arg("cfg"), py::arg("act"), py::arg("target"), py::arg("request") = GradientRequest{});
    m.def(
        "check_gradient",
        [](const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act, const AngleTrace& target,
           const GradientRequest& req, double relative_step) {
            GradientCheck c;
            {
                py::gil_scoped_release release;
                c = check_gradient(mesh, cfg, act, choose_keypoints(mesh), target, req, relative_step);
            }
            return check_dict(c);
        },
        py::arg("mesh"), py::arg("cfg"), py::arg("act"), py::arg("target"), py::arg("request") = GradientRequest{},
        py::arg("relative_step") = 1e-5);

    // sysid
    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def(py::init([](std::string id, double v, double f, AngleTrace tr) {
                 return Dataset{std::move(id), v, f, std::move(tr)};
             }),
             py::arg("id"), py::arg("voltage"), py::arg("frequency"), py::arg("trace"))
        .def_readwrite("id", &Dataset::id)
        .def_readwrite("voltage", &Dataset::voltage)
        .def_readwrite("frequency", &Dataset::frequency)
        .def_readwrite("trace", &Dataset::trace);

    py::class_<OptimizerConfig>(m, "OptimizerConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate_amplitude", &OptimizerConfig::learning_rate_amplitude)
        .def_readwrite("learning_rate_slope", &OptimizerConfig::learning_rate_slope)
        .def_readwrite("max_iterations", &OptimizerConfig::max_iterations)
        .def_readwrite("rel_tol", &OptimizerConfig::rel_tol)
        .def_readwrite("window", &OptimizerConfig::window)
        .def_readwrite("init_amplitude", &OptimizerConfig::init_amplitude)
        .def_readwrite("init_slope", &OptimizerConfig::init_slope)
        .def_readwrite("slope_scale", &OptimizerConfig::slope_scale)
        .def_readwrite("amplitude_max", &OptimizerConfig::amplitude_max)
        .def_readwrite("slope_min", &OptimizerConfig::slope_min)
        .def_readwrite("slope_max", &OptimizerConfig::slope_max)
        .def_readwrite("smoothing", &OptimizerConfig::smoothing)
        .def_readwrite("checkpoint_every", &OptimizerConfig::checkpoint_every)
        .def_readwrite("threads", &OptimizerConfig::threads);

    py::class_<DatasetError>(m, "DatasetError")
        .def_readonly("id", &DatasetError::id)
        .def_readonly("voltage", &DatasetError::voltage)
        .def_readonly("frequency", &DatasetError::frequency)
        .def_readonly("mae", &DatasetError::mae);

    py::class_<FitResult>(m, "FitResult")
        .def_property_readonly("amplitude_table", [](const FitResult& f) { return f.amplitude_table.entries; })
        .def_readonly("slope", &FitResult::slope)
        .def_readonly("train_mae", &FitResult::train_mae)
        .def_readonly("per_dataset_mae", &FitResult::per_dataset_mae)
        .def_readonly("iterations", &FitResult::iterations)
        .def_readonly("loss_history", &FitResult::loss_history)
        .def_readonly("best_loss", &FitResult::best_loss)
        .def("to_json", [](const FitResult& f, const std::string& hash) { return dump_json(fit_to_json(f, hash)); },
             py::arg("config_hash") = "");

    py::class_<ValidationReport>(m, "ValidationReport")
        .def_readonly("per_dataset", &ValidationReport::per_dataset)
        .def_readonly("aggregate_mae", &ValidationReport::aggregate_mae)
        .def_readonly("simulated", &ValidationReport::simulated)
        .def_readonly("extrapolated", &ValidationReport::extrapolated);

    m.def(
        "identify",
        [](const std::vector<Dataset>& datasets, const SwimmerMesh& mesh, const SimConfig& cfg,
           const ActuationParams& base, const OptimizerConfig& opt) {
            py::gil_scoped_release release;
            return identify(datasets, mesh, cfg, base, opt);
        },
        py::arg("datasets"), py::arg("mesh"), py::arg("cfg"), py::arg("base"), py::arg("optimizer") = OptimizerConfig{});
    m.def(
        "validate",
        [](const FitResult& fit, const std::vector<Dataset>& unseen, const SwimmerMesh& mesh, const SimConfig& cfg,
           const ActuationParams& base) {
            py::gil_scoped_release release;
            return validate(fit, unseen, mesh, cfg, base);
        },
        py::arg("fit"), py::arg("unseen"), py::arg("mesh"), py::arg("cfg"), py::arg("base"));
    m.def(
        "synthesize_dataset",
        [](const std::string& id, const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
           double voltage, double sample_rate) {
            py::gil_scoped_release release;
            return synthesize_dataset(id, mesh, cfg, act, voltage, sample_rate);
        },
        py::arg("id"), py::arg("mesh"), py::arg("cfg"), py::arg("act"), py::arg("voltage"),
        py::arg("sample_rate") = 120.0);

    // config
    m.def(
        "load_config", [](const fs::path& p) { return config_to_json(load_config(p)).dump(); }, py::arg("path"),
        "Loads and validates a config file; returns the full config as a JSON string.");
    m.def(
        "config_hash", [](const fs::path& p) { return config_hash(load_config(p)); }, py::arg("path"));
}
