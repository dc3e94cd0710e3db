#ifndef HANKEL_SSR_MINIMIZE_HPP
#define HANKEL_SSR_MINIMIZE_HPP

#include <functional>

#include <Eigen/Dense>

namespace hankel_ssr
{

struct NelderMeadOptions
{
    /// Evaluations allowed per simplex run.
    int budget = 200;
    /// Extra runs started from the best point found so far.
    int restarts = 1;
    /// Stop a run once the characteristic simplex size drops below this.
    double size_tolerance = 1e-5;
};

struct MinimizeResult
{
    Eigen::VectorXd x;
    double value     = 0.0;
    int evaluations  = 0;
    /// False when no evaluation returned a finite value.
    bool finite      = false;
    /// True when the last run met the size tolerance within its budget.
    bool converged   = false;
};

///
/// Box-constrained Nelder-Mead (GSL nmsimplex2). Points outside the box are
/// evaluated at their projection plus a quadratic penalty; the returned point
/// always lies inside the box and is the best point ever evaluated, so the
/// result never exceeds f(clamp(x0)).
///
/// Non-finite objective values count as failed probes.
///
MinimizeResult
nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
            const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
            const Eigen::VectorXd& upper, const Eigen::VectorXd& step,
            const NelderMeadOptions& options = {});

} // namespace hankel_ssr

#endif // HANKEL_SSR_MINIMIZE_HPP
