#pragma once

#include <functional>
#include <string>

#include <Eigen/Core>

namespace easbo {

/// Objective returning f(x) and writing the gradient into `grad`. May throw
/// ComputeError, which the minimizer treats as an infeasible step.
using GradientObjective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct LbfgsOptions {
    int max_iterations = 200;
    int memory = 10;
    double gradient_tolerance = 1e-6;   ///< on the projected gradient, inf-norm
    double function_tolerance = 1e-10;  ///< relative decrease between iterations
};

struct MinimizeResult {
    Eigen::VectorXd x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Projected L-BFGS for box-constrained smooth minimization. Coordinates at an
/// active bound are frozen for the quasi-Newton step; the line search
/// backtracks along the projected path with an Armijo condition.
MinimizeResult minimize_box_lbfgs(const GradientObjective& objective, Eigen::VectorXd x0,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const LbfgsOptions& options = {});

}  // namespace easbo
