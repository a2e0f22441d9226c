#pragma once

#include <Eigen/Core>

#include <cstdio>
#include <stdexcept>
#include <string>

namespace swimsim {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Scientific notation with 3 decimals, for diagnostics.
inline std::string sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

// Bad input, bad configuration, malformed files. The CLI maps these to exit code 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Solver non-convergence, element inversion, non-finite values. Exit code 1.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InversionError : public NumericalError {
public:
    InversionError(int element, double det)
        : NumericalError("element " + std::to_string(element) + " inverted (det F = " +
                         sci(det) + ")"),
          element_(element), det_(det) {}
    int element() const { return element_; }
    double det() const { return det_; }

private:
    int element_;
    double det_;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(int iterations, double residual)
        : NumericalError("Newton solve did not converge after " + std::to_string(iterations) +
                         " iterations (scaled residual " + sci(residual) + ")"),
          iterations_(iterations), residual_(residual) {}
    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

}  // namespace swimsim
