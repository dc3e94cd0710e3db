#include "hankel_ssr/minimize.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

namespace hankel_ssr
{

namespace
{

// Returned to GSL for failed probes; nmsimplex2 rejects non-finite values.
constexpr double failed_value = 1e300;

struct Context
{
    const std::function<double(const Eigen::VectorXd&)>* f;
    const Eigen::VectorXd* lower;
    const Eigen::VectorXd* upper;
    int evaluations = 0;
    Eigen::VectorXd best_x;
    double best_value = std::numeric_limits<double>::infinity();
};

double trampoline(const gsl_vector* v, void* params)
{
    auto& ctx     = *static_cast<Context*>(params);
    const auto n  = static_cast<Eigen::Index>(v->size);
    Eigen::VectorXd x(n);
    for (Eigen::Index k = 0; k < n; ++k)
        x[k] = gsl_vector_get(v, static_cast<size_t>(k));
    const Eigen::VectorXd y = x.cwiseMax(*ctx.lower).cwiseMin(*ctx.upper);

    ++ctx.evaluations;
    double value;
    try
    {
        value = (*ctx.f)(y);
    }
    catch (const std::exception&)
    {
        value = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(value))
        return failed_value;
    if (value < ctx.best_value)
    {
        ctx.best_value = value;
        ctx.best_x     = y;
    }
    const double dist2 = (x - y).squaredNorm();
    return value + (1.0 + std::abs(value)) * dist2;
}

struct VectorDeleter
{
    void operator()(gsl_vector* v) const { gsl_vector_free(v); }
};
struct MinimizerDeleter
{
    void operator()(gsl_multimin_fminimizer* s) const
    {
        gsl_multimin_fminimizer_free(s);
    }
};

using VectorPtr    = std::unique_ptr<gsl_vector, VectorDeleter>;
using MinimizerPtr = std::unique_ptr<gsl_multimin_fminimizer, MinimizerDeleter>;

VectorPtr to_gsl(const Eigen::VectorXd& x)
{
    VectorPtr v(gsl_vector_alloc(static_cast<size_t>(x.size())));
    for (Eigen::Index k = 0; k < x.size(); ++k)
        gsl_vector_set(v.get(), static_cast<size_t>(k), x[k]);
    return v;
}

// One simplex run; returns true when the size tolerance was met.
bool run_simplex(Context& ctx, const Eigen::VectorXd& start,
                 const Eigen::VectorXd& step, int budget, double tol)
{
    const size_t n = static_cast<size_t>(start.size());
    gsl_multimin_function fn{&trampoline, n, &ctx};
    auto x0 = to_gsl(start);
    auto ss = to_gsl(step);
    MinimizerPtr s(
        gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n));
    if (gsl_multimin_fminimizer_set(s.get(), &fn, x0.get(), ss.get()) !=
        GSL_SUCCESS)
        return false;

    const int stop_at = ctx.evaluations + budget;
    while (ctx.evaluations < stop_at)
    {
        if (gsl_multimin_fminimizer_iterate(s.get()) != GSL_SUCCESS)
            return false;
        const double size = gsl_multimin_fminimizer_size(s.get());
        if (gsl_multimin_test_size(size, tol) == GSL_SUCCESS)
            return true;
    }
    return false;
}

} // namespace

MinimizeResult
nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
            const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
            const Eigen::VectorXd& upper, const Eigen::VectorXd& step,
            const NelderMeadOptions& options)
{
    const auto n = x0.size();
    if (lower.size() != n || upper.size() != n || step.size() != n)
        throw std::invalid_argument("nelder_mead: dimension mismatch");
    if ((lower.array() > upper.array()).any())
        throw std::invalid_argument("nelder_mead: empty box");

    // The library is used from several threads; never abort on GSL errors.
    gsl_set_error_handler_off();

    Context ctx{&f, &lower, &upper};
    const Eigen::VectorXd start = x0.cwiseMax(lower).cwiseMin(upper);
    ctx.best_x                  = start;
    // Evaluate the start first so the best point is never worse than it.
    {
        auto v = to_gsl(start);
        trampoline(v.get(), &ctx);
    }

    bool converged = run_simplex(ctx, start, step, options.budget,
                                 options.size_tolerance);
    for (int k = 0; k < options.restarts; ++k)
        converged = run_simplex(ctx, ctx.best_x, step, options.budget,
                                options.size_tolerance);

    MinimizeResult result;
    result.x           = ctx.best_x;
    result.value       = ctx.best_value;
    result.evaluations = ctx.evaluations;
    result.finite      = std::isfinite(ctx.best_value);
    result.converged   = converged;
    return result;
}

} // namespace hankel_ssr
