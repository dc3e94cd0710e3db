#include <cmath>
#include <limits>
#include <sstream>

#include "hankel_ssr/estimators.hpp"
#include "hankel_ssr/minimize.hpp"

namespace hankel_ssr
{

Eigen::VectorXd estimate_noise_variance(const Datasetd& d,
                                        const ImpulseResponsed& theta)
{
    const Index p = d.output_count(), m = d.input_count();
    if (theta.outputs() != p || theta.inputs() != m)
        throw std::invalid_argument(
            "estimate_noise_variance: theta does not match the dataset");
    const Index T            = theta.length();
    const Eigen::MatrixXd phi = input_regressor(d, T);
    Eigen::VectorXd sigma(p);
    for (Index i = 0; i < p; ++i)
    {
        const Eigen::VectorXd resid =
            d.outputs().col(i) - phi * theta.theta().segment(i * T * m, T * m);
        sigma[i] = std::max(resid.squaredNorm() / double(d.samples()),
                            noise_variance_floor);
    }
    return sigma;
}

//-----------------------------------------------------------------------------
// SsChannelEvidence
//-----------------------------------------------------------------------------

SsChannelEvidence::SsChannelEvidence(const Datasetd& d, Index output,
                                     Index length, int order)
    : order_(order), T_(length), m_(d.input_count())
{
    if (output < 0 || output >= d.output_count())
        throw std::out_of_range("SsChannelEvidence: bad output index");
    if (order != 1 && order != 2)
        throw std::invalid_argument("SsChannelEvidence: order must be 1 or 2");
    phi_   = input_regressor(d, length);
    y_     = d.outputs().col(output);
    gram_  = phi_.transpose() * phi_;
    cross_ = phi_.transpose() * y_;
}

Eigen::MatrixXd SsChannelEvidence::prior_factor(double alpha) const
{
    const Eigen::MatrixXd G = stable_spline_gram<double>(order_, alpha, T_);
    Eigen::MatrixXd K       = G;
    K.diagonal().array() += prior_jitter * G.trace() / double(T_);
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success)
        throw NumericalError("stable-spline prior not positive definite at "
                             "alpha = " +
                             std::to_string(alpha));
    const Eigen::MatrixXd L = llt.matrixL();
    Eigen::MatrixXd full    = Eigen::MatrixXd::Zero(T_ * m_, T_ * m_);
    for (Index j = 0; j < m_; ++j)
        full.block(j * T_, j * T_, T_, T_) = L;
    return full;
}

namespace
{

struct ChannelSolve
{
    Eigen::VectorXd gamma;
    Eigen::VectorXd theta;
    double logdet = 0.0;
};

// gamma = (L^T G L + ratio I)^{-1} L^T h, theta = L gamma.
ChannelSolve solve_channel(const Eigen::MatrixXd& L, const Eigen::MatrixXd& G,
                           const Eigen::VectorXd& h, double ratio,
                           double alpha, double scale, double sigma)
{
    Eigen::MatrixXd M = L.transpose() * G * L;
    M.diagonal().array() += ratio;
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
    {
        std::ostringstream msg;
        msg << "stable-spline evidence: factorization failed at alpha="
            << alpha << " scale=" << scale << " sigma=" << sigma;
        throw NumericalError(msg.str());
    }
    ChannelSolve s;
    s.gamma  = llt.solve(L.transpose() * h);
    s.theta  = L * s.gamma;
    s.logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return s;
}

} // namespace

double SsChannelEvidence::negative_log_ml(double alpha, double scale,
                                          double sigma) const
{
    if (!(scale > 0.0) || !(sigma > 0.0))
        throw std::invalid_argument(
            "ss_negative_log_ml: scale and sigma must be positive");
    const Eigen::MatrixXd L = prior_factor(alpha);
    const double ratio      = sigma / scale;
    const ChannelSolve s =
        solve_channel(L, gram_, cross_, ratio, alpha, scale, sigma);
    const double quad =
        ((y_ - phi_ * s.theta).squaredNorm() + ratio * s.gamma.squaredNorm()) /
        sigma;
    const double n      = double(T_ * m_);
    const double logdet = double(samples()) * std::log(sigma) + s.logdet -
                          n * std::log(ratio);
    return quad + logdet;
}

Eigen::VectorXd SsChannelEvidence::posterior_mean(double alpha, double scale,
                                                  double sigma) const
{
    const Eigen::MatrixXd L = prior_factor(alpha);
    return solve_channel(L, gram_, cross_, sigma / scale, alpha, scale, sigma)
        .theta;
}

double ss_negative_log_ml(const Datasetd& d, Index output, Index length,
                          int order, double alpha, double scale, double sigma)
{
    return SsChannelEvidence(d, output, length, order)
        .negative_log_ml(alpha, scale, sigma);
}

ImpulseResponsed ss_posterior_mean(const Datasetd& d, Index length,
                                   const KernelModeld& kernel,
                                   const Eigen::VectorXd& sigma)
{
    const Index p = d.output_count(), m = d.input_count();
    if (kernel.outputs() != p || kernel.inputs() != m ||
        kernel.length() != length || sigma.size() != p)
        throw std::invalid_argument("ss_posterior_mean: dimension mismatch");
    ImpulseResponsed theta(p, m, length);
    for (Index i = 0; i < p; ++i)
    {
        const double alpha = kernel.alpha()[i * m];
        const double scale = kernel.scale()[i * m];
        for (Index j = 1; j < m; ++j)
            if (kernel.alpha()[i * m + j] != alpha ||
                kernel.scale()[i * m + j] != scale)
                throw std::invalid_argument(
                    "ss_posterior_mean: channels of one output must share "
                    "(alpha, scale)");
        SsChannelEvidence ev(d, i, length, kernel.order());
        theta.theta().segment(i * m * length, m * length) =
            ev.posterior_mean(alpha, scale, sigma[i]);
    }
    return theta;
}

std::pair<double, double> ss_alpha_bounds(int order)
{
    if (order == 1)
        return {0.5, 0.999};
    if (order == 2)
        return {0.6, 0.99};
    throw std::invalid_argument("ss_alpha_bounds: order must be 1 or 2");
}

namespace
{

SsChannelFit fit_channel(const SsChannelEvidence& ev, const Datasetd& d)
{
    const auto [alpha_lo, alpha_hi] = ss_alpha_bounds(ev.order());
    const double var_y =
        std::max(ev.output().squaredNorm() / double(ev.samples()), 1e-12);
    const double var_u =
        std::max(d.inputs().squaredNorm() / double(d.inputs().size()), 1e-12);
    const double scale0 = var_y / var_u;
    const double sigma0 = var_y;
    const double decades = 6.0 * std::log(10.0);

    Eigen::Vector3d lower(alpha_lo, std::log(scale0) - decades,
                          std::log(sigma0) - decades);
    Eigen::Vector3d upper(alpha_hi, std::log(scale0) + decades,
                          std::log(sigma0) + decades);

    auto objective = [&](const Eigen::VectorXd& x) {
        return ev.negative_log_ml(x[0], std::exp(x[1]), std::exp(x[2]));
    };

    // Coarse grid for the starting point.
    Eigen::Vector3d start(0.5 * (alpha_lo + alpha_hi), std::log(scale0),
                          std::log(sigma0));
    double best = std::numeric_limits<double>::infinity();
    const int n_alpha = 8;
    const double sigma_fracs[] = {1.0, 0.5, 0.2, 0.1, 0.03, 0.01, 1e-3, 1e-5};
    for (int a = 0; a < n_alpha; ++a)
    {
        const double alpha =
            alpha_lo + (alpha_hi - alpha_lo) * double(a) / double(n_alpha - 1);
        for (int s = -5; s <= 1; ++s)
            for (double frac : sigma_fracs)
            {
                const Eigen::Vector3d x(alpha,
                                        std::log(scale0) + s * std::log(10.0),
                                        std::log(sigma0 * frac));
                double v;
                try
                {
                    v = objective(x);
                }
                catch (const std::exception&)
                {
                    continue;
                }
                if (std::isfinite(v) && v < best)
                {
                    best  = v;
                    start = x;
                }
            }
    }

    const Eigen::Vector3d step(0.1 * (alpha_hi - alpha_lo), 1.0, 1.0);
    const MinimizeResult res = nelder_mead(objective, start, lower, upper, step);
    if (!res.finite)
        throw NumericalError("stable-spline evidence could not be evaluated");

    SsChannelFit fit;
    fit.alpha     = res.x[0];
    fit.scale     = std::exp(res.x[1]);
    fit.sigma     = std::exp(res.x[2]);
    fit.nll       = res.value;
    fit.converged = res.converged;
    return fit;
}

} // namespace

SsResult ss_estimate(const Datasetd& d, Index length, int order)
{
    const Index p = d.output_count(), m = d.input_count();
    SsResult out;
    Eigen::VectorXd alpha(p), scale(p), sigma(p);
    out.theta = ImpulseResponsed(p, m, length);
    for (Index i = 0; i < p; ++i)
    {
        SsChannelEvidence ev(d, i, length, order);
        const SsChannelFit fit = fit_channel(ev, d);
        out.channels.push_back(fit);
        out.warning = out.warning || !fit.converged;
        alpha[i]    = fit.alpha;
        scale[i]    = fit.scale;
        sigma[i]    = fit.sigma;
        out.theta.theta().segment(i * m * length, m * length) =
            ev.posterior_mean(fit.alpha, fit.scale, fit.sigma);
    }
    out.kernel = KernelModeld::per_output(order, length, m, alpha, scale);
    out.sigma  = estimate_noise_variance(d, out.theta);
    return out;
}

} // namespace hankel_ssr
