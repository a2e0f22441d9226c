#include "swimsim/fem.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>

namespace swimsim {

void Material::validate() const {
    if (!(youngs_modulus > 0.0)) throw InputError("material: Young's modulus must be positive");
    if (!(poisson_ratio >= 0.0 && poisson_ratio < 0.5))
        throw InputError("material: Poisson ratio must lie in [0, 0.5)");
    if (!(density > 0.0)) throw InputError("material: density must be positive");
    if (!(damping >= 0.0)) throw InputError("material: damping must be non-negative");
}

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw InputError("sim: dt must be positive");
    if (!(solver_tol > 0.0)) throw InputError("sim: solver_tol must be positive");
    if (max_newton_iters < 1) throw InputError("sim: max_newton_iters must be at least 1");
    if (!(thickness > 0.0)) throw InputError("sim: thickness must be positive");
    if (!(pin_length >= 0.0)) throw InputError("sim: pin_length must be non-negative");
    if (!gravity.allFinite()) throw InputError("sim: gravity must be finite");
    for (const auto& m : materials) m.validate();
}

SimState rest_state(const SwimmerMesh& mesh) {
    SimState s;
    s.q.resize(2 * mesh.num_vertices());
    for (int i = 0; i < mesh.num_vertices(); ++i) s.q.segment<2>(2 * i) = mesh.vertices[i];
    s.v = Eigen::VectorXd::Zero(s.q.size());
    s.t = 0.0;
    return s;
}

namespace {

Mat2 edge_matrix(const Vec2& a, const Vec2& b, const Vec2& c) {
    Mat2 D;
    D.col(0) = b - a;
    D.col(1) = c - a;
    return D;
}

Mat2 rest_inverse(const SwimmerMesh& mesh, int e) {
    const auto& t = mesh.triangles[e];
    Mat2 Dm = edge_matrix(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    double det = Dm.determinant();
    double scale = Dm.col(0).squaredNorm() + Dm.col(1).squaredNorm();
    if (!(std::abs(det) > 1e-14 * scale))
        throw InputError("triangle " + std::to_string(e) + " has a singular rest edge matrix");
    return Dm.inverse();
}

Mat2 deformed_gradient(const Eigen::VectorXd& q, const std::array<int, 3>& t, const Mat2& rest_inv) {
    Vec2 x0 = q.segment<2>(2 * t[0]);
    return edge_matrix(x0, q.segment<2>(2 * t[1]), q.segment<2>(2 * t[2])) * rest_inv;
}

Eigen::Matrix<double, 4, 6> gradient_map(const Mat2& rest_inv) {
    // vec(F) index 2i + j, dof index 2n + i.
    Eigen::Matrix<double, 4, 6> B = Eigen::Matrix<double, 4, 6>::Zero();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            B(2 * i + j, i) = -(rest_inv(0, j) + rest_inv(1, j));
            for (int k = 0; k < 2; ++k) B(2 * i + j, 2 * (k + 1) + i) = rest_inv(k, j);
        }
    return B;
}

Mat4 project_psd(const Mat4& H) {
    Eigen::SelfAdjointEigenSolver<Mat4> eig(H);
    Vec4 lambda = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Mat2 deformation_gradient(const SwimmerMesh& mesh, const Eigen::VectorXd& q, int element) {
    if (element < 0 || element >= mesh.num_triangles())
        throw InputError("deformation_gradient: triangle index out of range");
    return deformed_gradient(q, mesh.triangles[element], rest_inverse(mesh, element));
}

CorotatedTerm corotated_term(const Mat2& F, double mu, double lambda) {
    const double a = F(0, 0), b = F(0, 1), c = F(1, 0), d = F(1, 1);
    const Vec4 f(a, b, c, d);
    const double J = a * d - b * c;
    // tr(R^T F) for the polar rotation R equals |(a + d, c - b)| when det F > 0.
    const double u = a + d, v = c - b;
    const double r = std::hypot(u, v);
    const Vec4 gu(1.0, 0.0, 0.0, 1.0), gv(0.0, -1.0, 1.0, 0.0);
    const Vec4 grad_r = (u * gu + v * gv) / r;
    const Vec4 tangent = v * gu - u * gv;
    const Mat4 hess_r = tangent * tangent.transpose() / (r * r * r);
    const Vec4 grad_J(d, -c, -b, a);
    Mat4 hess_J = Mat4::Zero();
    hess_J(0, 3) = hess_J(3, 0) = 1.0;
    hess_J(1, 2) = hess_J(2, 1) = -1.0;

    CorotatedTerm t;
    t.energy = mu * (f.squaredNorm() - 2.0 * r + 2.0) + 0.5 * lambda * (J - 1.0) * (J - 1.0);
    t.gradient = mu * (2.0 * f - 2.0 * grad_r) + lambda * (J - 1.0) * grad_J;
    t.hessian = mu * (2.0 * Mat4::Identity() - 2.0 * hess_r) +
                lambda * (grad_J * grad_J.transpose() + (J - 1.0) * hess_J);
    return t;
}

double elastic_energy(const SwimmerMesh& mesh, const Eigen::VectorXd& q, const SimConfig& cfg) {
    if (q.size() != 2 * mesh.num_vertices()) throw InputError("elastic_energy: position vector size mismatch");
    double total = 0.0;
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        Mat2 F = deformation_gradient(mesh, q, e);
        double det = F.determinant();
        if (!(det > 0.0)) throw InversionError(e, det);
        const Material& m = cfg.material(mesh.region[e]);
        total += mesh.rest_area[e] * cfg.thickness * corotated_term(F, m.mu(), m.lambda()).energy;
    }
    return total;
}

Simulator::Simulator(const SwimmerMesh& mesh, const SimConfig& cfg, double muscle_stiffness)
    : mesh_(mesh), cfg_(cfg), muscle_stiffness_(muscle_stiffness) {
    cfg_.validate();
    mesh_.validate();
    if (!(muscle_stiffness > 0.0)) throw InputError("muscle stiffness must be positive");

    const int nv = mesh_.num_vertices();
    const int ndof = 2 * nv;
    mass_ = Eigen::VectorXd::Zero(ndof);
    elements_.resize(mesh_.num_triangles());
    double mu_max = 0.0, edge_sum = 0.0;
    for (int e = 0; e < mesh_.num_triangles(); ++e) {
        Element& el = elements_[e];
        el.v = mesh_.triangles[e];
        el.rest_inverse = rest_inverse(mesh_, e);
        el.dF_dx = gradient_map(el.rest_inverse);
        el.volume = mesh_.rest_area[e] * cfg_.thickness;
        const Material& mat = cfg_.material(mesh_.region[e]);
        el.mu = mat.mu();
        el.lambda = mat.lambda();
        mu_max = std::max(mu_max, el.mu);
        if (mesh_.region[e] == Region::UpperMuscle) el.muscle = 0;
        if (mesh_.region[e] == Region::LowerMuscle) el.muscle = 1;
        energy_noise_ += (el.mu + el.lambda + (el.muscle >= 0 ? muscle_stiffness_ : 0.0)) * el.volume;
        el.fiber = mesh_.fiber[e];
        for (int k = 0; k < 3; ++k) {
            mass_.segment<2>(2 * el.v[k]).array() += mat.density * el.volume / 3.0;
            edge_sum += (mesh_.vertices[el.v[(k + 1) % 3]] - mesh_.vertices[el.v[k]]).norm();
        }
    }
    force_scale_ = mu_max * cfg_.thickness * edge_sum / (3.0 * mesh_.num_triangles());
    // Absolute rounding error of the objective: element energies are formed
    // from O(1) entries of F scaled by the moduli and volumes.
    energy_noise_ *= 64.0 * std::numeric_limits<double>::epsilon();

    external_force_ = Eigen::VectorXd::Zero(ndof);
    for (int i = 0; i < nv; ++i) external_force_.segment<2>(2 * i) = mass_(2 * i) * cfg_.gravity;
    for (const auto& load : cfg_.point_loads) {
        if (load.vertex < 0 || load.vertex >= nv) throw InputError("point load vertex out of range");
        external_force_.segment<2>(2 * load.vertex) += load.force;
    }

    pinned_.assign(ndof, false);
    if (cfg_.boundary == Boundary::PinnedHead) {
        double xmin = std::numeric_limits<double>::infinity();
        for (const auto& p : mesh_.vertices) xmin = std::min(xmin, p.x());
        for (int i = 0; i < nv; ++i)
            if (mesh_.vertices[i].x() <= xmin + cfg_.pin_length + 1e-12) pinned_[2 * i] = pinned_[2 * i + 1] = true;
    }

    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(36 * elements_.size() + ndof);
    for (int i = 0; i < ndof; ++i) triplets.emplace_back(i, i, 0.0);
    for (const auto& el : elements_)
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b) triplets.emplace_back(2 * el.v[a / 2] + a % 2, 2 * el.v[b / 2] + b % 2, 0.0);
    hessian_.resize(ndof, ndof);
    hessian_.setFromTriplets(triplets.begin(), triplets.end());
    hessian_.makeCompressed();

    auto slot = [&](int row, int col) {
        const int* inner = hessian_.innerIndexPtr();
        const int* begin = inner + hessian_.outerIndexPtr()[col];
        const int* end = inner + hessian_.outerIndexPtr()[col + 1];
        return static_cast<int>(std::lower_bound(begin, end, row) - inner);
    };
    for (auto& el : elements_)
        for (int a = 0; a < 6; ++a)
            for (int b = 0; b < 6; ++b)
                el.slots[6 * a + b] = slot(2 * el.v[a / 2] + a % 2, 2 * el.v[b / 2] + b % 2);

    damping_ = hessian_;
    damping_.coeffs().setZero();
    for (int e = 0; e < mesh_.num_triangles(); ++e) {
        const Element& el = elements_[e];
        const double beta = cfg_.material(mesh_.region[e]).damping;
        if (beta == 0.0) continue;
        Mat6 K = el.volume * el.dF_dx.transpose() *
                 corotated_term(Mat2::Identity(), el.mu, el.lambda).hessian * el.dF_dx;
        for (int k = 0; k < 36; ++k) damping_.valuePtr()[el.slots[k]] += beta * K(k / 6, k % 6);
    }

    solver_.analyzePattern(hessian_);
}

double Simulator::potential_energy(const Eigen::VectorXd& q, const MuscleActivations& act) const {
    double total = 0.0;
    for (int e = 0; e < static_cast<int>(elements_.size()); ++e) {
        const Element& el = elements_[e];
        Mat2 F = deformed_gradient(q, el.v, el.rest_inverse);
        double det = F.determinant();
        if (!(det > 0.0)) throw InversionError(e, det);
        total += el.volume * corotated_term(F, el.mu, el.lambda).energy;
        if (el.muscle >= 0) {
            double a = el.muscle == 0 ? act.upper : act.lower;
            total += el.volume * muscle_term(F, el.fiber, a, muscle_stiffness_).energy;
        }
    }
    return total;
}

double Simulator::objective(const Eigen::VectorXd& q, const StepContext& ctx) const {
    double total = 0.0;
    for (const Element& el : elements_) {
        Mat2 F = deformed_gradient(q, el.v, el.rest_inverse);
        if (!(F.determinant() > 0.0)) return std::numeric_limits<double>::infinity();
        total += el.volume * corotated_term(F, el.mu, el.lambda).energy;
        if (el.muscle >= 0) {
            double a = el.muscle == 0 ? ctx.act.upper : ctx.act.lower;
            total += el.volume * muscle_term(F, el.fiber, a, muscle_stiffness_).energy;
        }
    }
    const double dt = cfg_.dt;
    Eigen::VectorXd dq_inertial = q - ctx.q_inertial;
    total += 0.5 / (dt * dt) * dq_inertial.dot(mass_.cwiseProduct(dq_inertial));
    Eigen::VectorXd dq = q - *ctx.q_prev;
    total += 0.5 / dt * dq.dot(damping_ * dq);
    total -= external_force_.dot(q);
    return total;
}

void Simulator::assemble(const Eigen::VectorXd& q, const StepContext& ctx, Eigen::VectorXd& grad,
                         bool projected) {
    const double dt = cfg_.dt;
    double* values = hessian_.valuePtr();
    hessian_.coeffs().setZero();
    grad = mass_.cwiseProduct(q - ctx.q_inertial) / (dt * dt) + damping_ * (q - *ctx.q_prev) / dt -
           external_force_;

    for (int e = 0; e < static_cast<int>(elements_.size()); ++e) {
        const Element& el = elements_[e];
        Mat2 F = deformed_gradient(q, el.v, el.rest_inverse);
        double det = F.determinant();
        if (!(det > 0.0)) throw InversionError(e, det);
        CorotatedTerm c = corotated_term(F, el.mu, el.lambda);
        Vec4 g = c.gradient;
        Mat4 H = projected ? project_psd(c.hessian) : c.hessian;
        if (el.muscle >= 0) {
            double a = el.muscle == 0 ? ctx.act.upper : ctx.act.lower;
            MuscleTerm m = muscle_term(F, el.fiber, a, muscle_stiffness_);
            g += m.gradient;
            H += projected ? project_psd(m.hessian) : m.hessian;
        }
        Vec6 ge = el.volume * el.dF_dx.transpose() * g;
        Mat6 He = el.volume * el.dF_dx.transpose() * H * el.dF_dx;
        for (int k = 0; k < 3; ++k) grad.segment<2>(2 * el.v[k]) += ge.segment<2>(2 * k);
        for (int k = 0; k < 36; ++k) values[el.slots[k]] += He(k / 6, k % 6);
    }

    hessian_.coeffs() += damping_.coeffs() / dt;
    for (int i = 0; i < num_dofs(); ++i) hessian_.coeffRef(i, i) += mass_(i) / (dt * dt);
    for (int i = 0; i < num_dofs(); ++i)
        if (pinned_[i]) grad(i) = 0.0;
    apply_dirichlet();
}

void Simulator::apply_dirichlet() {
    if (std::none_of(pinned_.begin(), pinned_.end(), [](bool p) { return p; })) return;
    for (int col = 0; col < hessian_.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(hessian_, col); it; ++it)
            if (pinned_[it.row()] || pinned_[col]) it.valueRef() = it.row() == col ? 1.0 : 0.0;
}

bool Simulator::factorize(double* min_pivot) {
    solver_.factorize(hessian_);
    if (solver_.info() != Eigen::Success) return false;
    const auto& D = solver_.vectorD();
    if (min_pivot) *min_pivot = D.minCoeff();
    return D.allFinite();
}

double Simulator::scaled_residual(const Eigen::VectorXd& grad) const {
    return grad.lpNorm<Eigen::Infinity>() / force_scale_;
}

SimState Simulator::step(const SimState& state, const MuscleActivations& act, StepReport* report) {
    if (state.q.size() != num_dofs() || state.v.size() != num_dofs())
        throw InputError("step: state size does not match the mesh");
    if (!state.q.allFinite() || !state.v.allFinite()) throw NumericalError("step: non-finite state");
    for (double a : {act.upper, act.lower})
        if (!(a > 0.0 && a <= 1.5)) throw InputError("step: activation must lie in (0, 1.5]");

    const double dt = cfg_.dt;
    StepContext ctx;
    ctx.q_prev = &state.q;
    ctx.act = act;
    ctx.q_inertial = state.q + dt * state.v;
    for (int i = 0; i < num_dofs(); ++i)
        if (pinned_[i]) ctx.q_inertial(i) = state.q(i);

    Eigen::VectorXd q = ctx.q_inertial;
    if (!std::isfinite(objective(q, ctx))) q = state.q;
    if (!std::isfinite(objective(q, ctx))) {
        for (int e = 0; e < static_cast<int>(elements_.size()); ++e) {
            double det = deformed_gradient(q, elements_[e].v, elements_[e].rest_inverse).determinant();
            if (!(det > 0.0)) throw InversionError(e, det);
        }
    }

    StepReport local;
    Eigen::VectorXd grad, dir;
    for (int it = 0;; ++it) {
        assemble(q, ctx, grad, false);
        local.residual = scaled_residual(grad);
        local.newton_iterations = it;
        if (!std::isfinite(local.residual)) throw NumericalError("step: non-finite residual");
        if (local.residual <= cfg_.solver_tol) break;
        if (it >= cfg_.max_newton_iters) throw ConvergenceError(it, local.residual);

        double min_pivot = 0.0;
        if (!factorize(&min_pivot) || !(min_pivot > 0.0)) {
            // Indefinite: shift the diagonal by a growing fraction of itself.
            local.used_regularized_hessian = true;
            const Eigen::VectorXd diag = hessian_.diagonal().cwiseAbs();
            bool ok = false;
            for (double tau = 1e-6; tau <= 1e3 && !ok; tau *= 10.0) {
                for (int i = 0; i < num_dofs(); ++i) hessian_.coeffRef(i, i) = diag(i) * (1.0 + tau);
                ok = factorize(&min_pivot) && min_pivot > 0.0;
            }
            if (!ok) {
                assemble(q, ctx, grad, true);
                if (!factorize()) throw NumericalError("step: Hessian factorization failed");
            }
        }
        dir = -solver_.solve(grad);
        for (int i = 0; i < num_dofs(); ++i)
            if (pinned_[i]) dir(i) = 0.0;

        const double f0 = objective(q, ctx);
        const double slope = grad.dot(dir);
        bool accepted = false;
        {
            // Near the solution the objective change drops below its roundoff,
            // so a full step that reduces the gradient is accepted as well.
            Eigen::VectorXd trial = q + dir;
            const double f = objective(trial, ctx);
            if (std::isfinite(f) && f <= f0 + 1e-10 * std::abs(f0) + energy_noise_) {
                Eigen::VectorXd trial_grad;
                assemble(trial, ctx, trial_grad, false);
                if (f <= f0 + 1e-4 * slope ||
                    trial_grad.lpNorm<Eigen::Infinity>() < grad.lpNorm<Eigen::Infinity>()) {
                    q = std::move(trial);
                    accepted = true;
                }
            }
        }
        double alpha = 0.5;
        for (int ls = 0; ls < 60 && !accepted; ++ls, alpha *= 0.5) {
            Eigen::VectorXd trial = q + alpha * dir;
            if (objective(trial, ctx) <= f0 + 1e-4 * alpha * slope) {
                q = std::move(trial);
                accepted = true;
            }
        }
        if (!accepted) throw ConvergenceError(it + 1, local.residual);
    }

    SimState next;
    next.q = std::move(q);
    next.v = (next.q - state.q) / dt;
    next.t = state.t + dt;
    if (report) *report = local;
    return next;
}

void Simulator::factor_step_hessian(const Eigen::VectorXd& q, const MuscleActivations& act) {
    StepContext ctx;
    ctx.q_prev = &q;
    ctx.q_inertial = q;
    ctx.act = act;
    Eigen::VectorXd grad;
    assemble(q, ctx, grad, false);
    if (!factorize()) throw NumericalError("adjoint: step Hessian factorization failed");
    const auto& D = solver_.vectorD();
    double dmax = D.cwiseAbs().maxCoeff(), dmin = D.cwiseAbs().minCoeff();
    if (!(dmin > 1e-14 * dmax))
        throw NumericalError("adjoint: step Hessian is numerically singular (min/max pivot ratio " +
                             std::to_string(dmin / dmax) + ")");
}

Eigen::VectorXd Simulator::solve(const Eigen::VectorXd& rhs) const { return solver_.solve(rhs); }

std::array<Eigen::VectorXd, 2> Simulator::residual_activation_derivatives(const Eigen::VectorXd& q) const {
    std::array<Eigen::VectorXd, 2> out = {Eigen::VectorXd::Zero(num_dofs()), Eigen::VectorXd::Zero(num_dofs())};
    for (const Element& el : elements_) {
        if (el.muscle < 0) continue;
        Mat2 F = deformed_gradient(q, el.v, el.rest_inverse);
        // The derivative does not depend on the activation value itself.
        MuscleTerm m = muscle_term(F, el.fiber, 1.0, muscle_stiffness_);
        Vec6 ge = el.volume * el.dF_dx.transpose() * m.d_gradient_d_activation;
        for (int k = 0; k < 3; ++k) out[el.muscle].segment<2>(2 * el.v[k]) += ge.segment<2>(2 * k);
    }
    for (auto& vec : out)
        for (int i = 0; i < num_dofs(); ++i)
            if (pinned_[i]) vec(i) = 0.0;
    return out;
}

SimState step(const SwimmerMesh& mesh, const SimState& state, const MuscleActivations& act,
              const SimConfig& cfg, double muscle_stiffness, StepReport* report) {
    Simulator sim(mesh, cfg, muscle_stiffness);
    return sim.step(state, act, report);
}

int step_count(double duration, double dt) {
    if (!(duration > 0.0)) throw InputError("duration must be positive");
    return static_cast<int>(std::ceil(duration / dt - 1e-9));
}

std::vector<SimState> simulate(const SwimmerMesh& mesh, const SimConfig& cfg, const ActuationParams& act,
                               double duration, double smoothing, std::vector<StepReport>* reports) {
    act.validate();
    const int n = step_count(duration, cfg.dt);
    Simulator sim(mesh, cfg, act.muscle_stiffness);
    std::vector<SimState> states;
    states.reserve(n + 1);
    states.push_back(rest_state(mesh));
    if (reports) reports->clear();
    for (int k = 0; k < n; ++k) {
        const double t_mid = (k + 0.5) * cfg.dt;
        MuscleActivations a{activation_signal(t_mid, act, Muscle::Upper, smoothing).value,
                            activation_signal(t_mid, act, Muscle::Lower, smoothing).value};
        StepReport report;
        try {
            states.push_back(sim.step(states.back(), a, &report));
        } catch (const NumericalError& e) {
            throw StepFailure(k, e.what());
        }
        states.back().t = (k + 1) * cfg.dt;
        if (reports) reports->push_back(report);
    }
    return states;
}

}  // namespace swimsim
