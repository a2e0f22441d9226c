#pragma once

#include "swimsim/actuation.hpp"
#include "swimsim/common.hpp"
#include "swimsim/geometry.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <optional>
#include <vector>

namespace swimsim {

struct Material {
    double youngs_modulus = 65e3;  // Pa
    double poisson_ratio = 0.45;
    double density = 900.0;        // kg/m^3
    double damping = 0.01;         // s, stiffness-proportional

    void validate() const;
    /// Plane-strain Lame parameters.
    double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
    double lambda() const {
        return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
    }
};

inline Material soft_material() { return Material{65e3, 0.45, 900.0, 0.01}; }
inline Material spine_material() { return Material{0.13e6, 0.45, 900.0, 0.01}; }

enum class Boundary { Free, PinnedHead };

struct PointLoad {
    int vertex = 0;
    Vec2 force = Vec2::Zero();  // N, applied as given
};

struct SimConfig {
    double dt = 0.01;
    /// Newton stops once max |grad| / (mu_max * thickness * mean edge) falls below this.
    double solver_tol = 1e-8;
    int max_newton_iters = 50;
    /// Indexed by Region.
    std::array<Material, kRegionCount> materials = {spine_material(), soft_material(), soft_material(),
                                                    soft_material()};
    Vec2 gravity = Vec2::Zero();
    Boundary boundary = Boundary::Free;
    /// PinnedHead fixes every vertex with x <= min x + pin_length.
    double pin_length = 0.0;
    double thickness = 1.0;
    std::vector<PointLoad> point_loads;

    void validate() const;
    const Material& material(Region r) const { return materials[static_cast<int>(r)]; }
};

/// Positions and velocities, interleaved (x0, y0, x1, y1, ...).
struct SimState {
    Eigen::VectorXd q;
    Eigen::VectorXd v;
    double t = 0.0;

    int num_vertices() const { return static_cast<int>(q.size() / 2); }
    Vec2 position(int i) const { return q.segment<2>(2 * i); }
};

SimState rest_state(const SwimmerMesh& mesh);

Mat2 deformation_gradient(const SwimmerMesh& mesh, const Eigen::VectorXd& q, int element);

/// Corotated density mu |F - R|^2 + lambda/2 (det F - 1)^2 with derivatives
/// with respect to vec(F) = (F00, F01, F10, F11). Requires det F > 0.
struct CorotatedTerm {
    double energy = 0.0;
    Vec4 gradient = Vec4::Zero();
    Mat4 hessian = Mat4::Zero();
};
CorotatedTerm corotated_term(const Mat2& F, double mu, double lambda);

/// Total corotated elastic energy in joules. Throws InversionError on det F <= 0.
double elastic_energy(const SwimmerMesh& mesh, const Eigen::VectorXd& q, const SimConfig& cfg);

struct StepReport {
    int newton_iterations = 0;
    double residual = 0.0;
    bool used_regularized_hessian = false;
};

/// A step failure annotated with the index of the failing step.
class StepFailure : public NumericalError {
public:
    StepFailure(int step, const std::string& what)
        : NumericalError("step " + std::to_string(step) + ": " + what), step_(step) {}
    int step() const { return step_; }

private:
    int step_;
};

/// Implicit-Euler integrator for one mesh. Each step minimizes
///   1/(2 dt^2) |q - q_t - dt v_t|_M^2 + E_elastic(q) + E_muscle(q, a)
///   + 1/(2 dt) (q - q_t)^T D (q - q_t) - f_ext . q
/// with Newton's method and backtracking, where D = sum_e damping_e K0_e is
/// the rest stiffness weighted by each element's damping coefficient.
///
/// Holds a factorization, so one instance must not be shared between threads.
class Simulator {
public:
    Simulator(const SwimmerMesh& mesh, const SimConfig& cfg, double muscle_stiffness);

    SimState step(const SimState& state, const MuscleActivations& act, StepReport* report = nullptr);

    const SwimmerMesh& mesh() const { return mesh_; }
    const SimConfig& config() const { return cfg_; }
    int num_dofs() const { return static_cast<int>(mass_.size()); }
    const Eigen::VectorXd& lumped_mass() const { return mass_; }
    const Eigen::SparseMatrix<double>& damping_matrix() const { return damping_; }
    bool pinned(int dof) const { return pinned_[dof]; }

    /// Elastic plus muscle energy at q.
    double potential_energy(const Eigen::VectorXd& q, const MuscleActivations& act) const;

    /// Factorizes the exact Hessian of the step objective at q (the converged
    /// solution of a step taken with activations `act`). Pinned rows and
    /// columns are replaced by identity. Throws NumericalError when the
    /// factorization fails or the matrix is numerically singular.
    void factor_step_hessian(const Eigen::VectorXd& q, const MuscleActivations& act);
    /// Solves with the last factorization.
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

    /// Derivative of the step residual (objective gradient) with respect to
    /// the upper and lower muscle activations, at q. Zero on pinned dofs.
    std::array<Eigen::VectorXd, 2> residual_activation_derivatives(const Eigen::VectorXd& q) const;

private:
    struct Element {
        std::array<int, 3> v{};
        Mat2 rest_inverse;
        Eigen::Matrix<double, 4, 6> dF_dx;
        double volume = 0.0;
        double mu = 0.0, lambda = 0.0;
        int muscle = -1;  // 0 upper, 1 lower
        Vec2 fiber = Vec2::Zero();
        std::array<int, 36> slots{};  // offsets into the CSC value array
    };

    struct StepContext {
        const Eigen::VectorXd* q_prev = nullptr;
        Eigen::VectorXd q_inertial;
        MuscleActivations act;
    };

    double objective(const Eigen::VectorXd& q, const StepContext& ctx) const;
    void assemble(const Eigen::VectorXd& q, const StepContext& ctx, Eigen::VectorXd& grad,
                  bool projected);
    double scaled_residual(const Eigen::VectorXd& grad) const;
    void apply_dirichlet();
    bool factorize(double* min_pivot = nullptr);

    SwimmerMesh mesh_;
    SimConfig cfg_;
    double muscle_stiffness_;
    std::vector<Element> elements_;
    Eigen::VectorXd mass_;
    Eigen::VectorXd external_force_;
    std::vector<bool> pinned_;
    Eigen::SparseMatrix<double> hessian_;
    Eigen::SparseMatrix<double> damping_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
    double force_scale_ = 1.0;
    double energy_noise_ = 0.0;
};

/// Single step on a freshly built simulator.
SimState step(const SwimmerMesh& mesh, const SimState& state, const MuscleActivations& act,
              const SimConfig& cfg, double muscle_stiffness = 6.5e4, StepReport* report = nullptr);

/// Number of steps needed to cover `duration`: ceil(duration / dt).
int step_count(double duration, double dt);

/// Trajectory of step_count + 1 states from rest. The activation for the step
/// t_k -> t_k + dt is evaluated at t_k + dt/2.
std::vector<SimState> simulate(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                               double duration, double smoothing = 0.0,
                               std::vector<StepReport>* reports = nullptr);

}  // namespace swimsim
