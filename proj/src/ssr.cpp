#include <cmath>
#include <limits>
#include <sstream>

#include "hankel_ssr/estimators.hpp"
#include "hankel_ssr/minimize.hpp"

namespace hankel_ssr
{

//-----------------------------------------------------------------------------
// Penalty assembly
//-----------------------------------------------------------------------------

Eigen::MatrixXd hankel_penalty_matrix(const Eigen::MatrixXd& Q,
                                      const HankelSpecd& spec)
{
    const Index rows = spec.hankel_rows(), cols = spec.hankel_cols();
    if (Q.rows() != rows || Q.cols() != rows)
        throw std::invalid_argument("hankel_penalty_matrix: Q must be rp x rp");

    const Eigen::MatrixXd M =
        spec.weighted() ? Eigen::MatrixXd(spec.W2() * Q * spec.W2().transpose())
                        : Q;
    const Eigen::MatrixXd E =
        spec.weighted() ? Eigen::MatrixXd(spec.W1().transpose() * spec.W1())
                        : Eigen::MatrixXd::Identity(cols, cols);

    struct Entry
    {
        Index b, b2;
        double value;
    };
    std::vector<Entry> nonzero;
    for (Index b2 = 0; b2 < cols; ++b2)
        for (Index b = 0; b < cols; ++b)
            if (E(b, b2) != 0.0)
                nonzero.push_back({b, b2, E(b, b2)});

    // vec(H^T) row a*cols + b holds H(a, b).
    const auto& map = spec.map();
    Eigen::MatrixXd S =
        Eigen::MatrixXd::Zero(map.cols(), map.cols());
    for (Index a2 = 0; a2 < rows; ++a2)
        for (Index a = 0; a < rows; ++a)
        {
            const double mv = M(a, a2);
            if (mv == 0.0)
                continue;
            for (const Entry& e : nonzero)
                S(map.source(a * cols + e.b), map.source(a2 * cols + e.b2)) +=
                    mv * e.value;
        }
    return S;
}

Eigen::MatrixXd a_matrix(const Eigen::MatrixXd& Q, double lambda1,
                         double lambda2, const Eigen::MatrixXd& K,
                         const HankelSpecd& spec)
{
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw std::invalid_argument("a_matrix: lambdas must be nonnegative");
    const Index n = spec.map().cols();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    if (lambda1 > 0.0)
        A += lambda1 * hankel_penalty_matrix(Q, spec);
    if (lambda2 > 0.0)
    {
        if (K.rows() != n || K.cols() != n)
            throw std::invalid_argument("a_matrix: K must be Tmp x Tmp");
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        if (llt.info() != Eigen::Success)
            throw NumericalError("a_matrix: K is not positive definite");
        A += lambda2 * llt.solve(Eigen::MatrixXd::Identity(n, n));
    }
    return 0.5 * (A + A.transpose());
}

ImpulseResponsed map_estimate(const Datasetd& d, const Eigen::MatrixXd& A,
                              const Eigen::VectorXd& sigma)
{
    const Index p = d.output_count(), m = d.input_count();
    if (A.rows() != A.cols() || A.rows() % (p * m) != 0)
        throw std::invalid_argument("map_estimate: A must be Tmp x Tmp");
    if (sigma.size() != p || (sigma.array() <= 0.0).any())
        throw std::invalid_argument(
            "map_estimate: sigma must hold p positive variances");
    const Index T             = A.rows() / (p * m);
    const Index block         = T * m;
    const Eigen::MatrixXd phi = input_regressor(d, T);
    const Eigen::MatrixXd G   = phi.transpose() * phi;

    Eigen::MatrixXd M = A;
    Eigen::VectorXd b(A.rows());
    for (Index i = 0; i < p; ++i)
    {
        M.block(i * block, i * block, block, block) += G / sigma[i];
        b.segment(i * block, block) =
            phi.transpose() * d.outputs().col(i) / sigma[i];
    }
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
    {
        std::ostringstream msg;
        msg << "map_estimate: normal equations not positive definite "
            << "(diagonal range [" << M.diagonal().minCoeff() << ", "
            << M.diagonal().maxCoeff() << "])";
        throw NumericalError(msg.str());
    }
    return ImpulseResponsed(p, m, T, llt.solve(b));
}

//-----------------------------------------------------------------------------
// Q update
//-----------------------------------------------------------------------------

QThresholds q_thresholds(Index hankel_rows, Index samples)
{
    if (samples < 16)
        throw std::invalid_argument("q_thresholds: need at least 16 samples");
    const double c       = double(hankel_rows);
    const double n       = double(samples);
    const double loglogn = std::log(std::log(n));
    return {std::sqrt(c * loglogn / n), 10.0 * n / (c * loglogn)};
}

Eigen::MatrixXd update_q(const ImpulseResponsed& theta,
                         const HankelSpecd& spec, Index samples)
{
    const Index rows       = spec.hankel_rows();
    const QThresholds thr  = q_thresholds(rows, samples);
    const Eigen::MatrixXd H = weighted_hankel(theta, spec);

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeFullU);
    Eigen::VectorXd s = Eigen::VectorXd::Zero(rows);
    s.head(svd.singularValues().size()) = svd.singularValues();

    Eigen::VectorXd sq(rows);
    for (Index k = 0; k < rows; ++k)
        sq[k] = s[k] >= thr.threshold ? 1.0 / (s[k] * s[k]) : thr.saturation;

    const Eigen::MatrixXd& U = svd.matrixU();
    Eigen::MatrixXd Q        = U * sq.asDiagonal() * U.transpose();
    return 0.5 * (Q + Q.transpose());
}

//-----------------------------------------------------------------------------
// SsrEvidence
//-----------------------------------------------------------------------------

SsrEvidence::SsrEvidence(const Datasetd& d, const Eigen::MatrixXd& K,
                         const Eigen::VectorXd& sigma, const HankelSpecd& spec)
    : spec_(spec),
      N_(d.samples()),
      p_(d.output_count()),
      m_(d.input_count()),
      T_(spec.length())
{
    const Index n = T_ * m_ * p_;
    if (spec.outputs() != p_ || spec.inputs() != m_)
        throw std::invalid_argument("SsrEvidence: spec does not match data");
    if (K.rows() != n || K.cols() != n)
        throw std::invalid_argument("SsrEvidence: K must be Tmp x Tmp");
    if (sigma.size() != p_ || (sigma.array() <= 0.0).any())
        throw std::invalid_argument(
            "SsrEvidence: sigma must hold p positive variances");

    Eigen::LLT<Eigen::MatrixXd> llt(K);
    if (llt.info() != Eigen::Success)
        throw NumericalError("SsrEvidence: K is not positive definite");
    Lk_ = llt.matrixL();

    const Eigen::MatrixXd phi = input_regressor(d, T_);
    const Index block         = T_ * m_;
    whitened_                 = Eigen::MatrixXd::Zero(N_ * p_, n);
    ybar_.resize(N_ * p_);
    for (Index i = 0; i < p_; ++i)
    {
        const double w = 1.0 / std::sqrt(sigma[i]);
        whitened_.block(i * N_, i * block, N_, block) =
            w * phi * Lk_.block(i * block, i * block, block, block);
        ybar_.segment(i * N_, N_) = w * d.outputs().col(i);
        logdet_noise_ += double(N_) * std::log(sigma[i]);
    }

    set_q(Eigen::MatrixXd::Identity(spec.hankel_rows(), spec.hankel_rows()));
}

void SsrEvidence::set_q(const Eigen::MatrixXd& Q)
{
    Q_                       = Q;
    const Eigen::MatrixXd S  = hankel_penalty_matrix(Q, spec_);
    const Eigen::MatrixXd Sb = Lk_.transpose() * S * Lk_;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 *
                                                       (Sb + Sb.transpose()));
    if (eig.info() != Eigen::Success)
        throw NumericalError("SsrEvidence: eigendecomposition failed");
    mu_     = eig.eigenvalues().cwiseMax(0.0);
    basis_  = Lk_ * eig.eigenvectors();
    design_ = whitened_ * eig.eigenvectors();
    gram_   = design_.transpose() * design_;
    cross_  = design_.transpose() * ybar_;
}

SsrEvidence::Solve SsrEvidence::solve(double lambda1, double lambda2) const
{
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
        throw std::invalid_argument("SsrEvidence: lambdas must be nonnegative");
    Solve s;
    s.diag = (lambda2 + lambda1 * mu_.array()).matrix();
    if ((s.diag.array() <= 0.0).any())
        throw NumericalError("SsrEvidence: penalty matrix is singular");
    Eigen::MatrixXd C = gram_;
    C.diagonal() += s.diag;
    Eigen::LLT<Eigen::MatrixXd> llt(C);
    if (llt.info() != Eigen::Success)
    {
        std::ostringstream msg;
        msg << "SsrEvidence: factorization failed at lambda1=" << lambda1
            << " lambda2=" << lambda2;
        throw NumericalError(msg.str());
    }
    s.beta     = llt.solve(cross_);
    s.logdet_c = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return s;
}

double SsrEvidence::negative_log_ml(double lambda1, double lambda2) const
{
    const Solve s = solve(lambda1, lambda2);
    const double quad =
        (ybar_ - design_ * s.beta).squaredNorm() +
        (s.diag.array() * s.beta.array().square()).sum();
    const double logdet =
        logdet_noise_ + s.logdet_c - s.diag.array().log().sum();
    return quad + logdet;
}

ImpulseResponsed SsrEvidence::estimate(double lambda1, double lambda2) const
{
    const Solve s = solve(lambda1, lambda2);
    return ImpulseResponsed(p_, m_, T_, basis_ * s.beta);
}

double ssr_negative_log_ml(const Datasetd& d, const Eigen::MatrixXd& Q,
                           double lambda1, double lambda2,
                           const Eigen::MatrixXd& K,
                           const Eigen::VectorXd& sigma,
                           const HankelSpecd& spec)
{
    SsrEvidence ev(d, K, sigma, spec);
    ev.set_q(Q);
    return ev.negative_log_ml(lambda1, lambda2);
}

//-----------------------------------------------------------------------------
// Hyperparameters
//-----------------------------------------------------------------------------

LambdaFit optimize_lambdas(const SsrEvidence& evidence, double lambda1_init,
                           double lambda2_init, const LambdaBounds& bounds,
                           int budget)
{
    const Eigen::Vector2d lower(std::log(bounds.lambda1_min),
                                std::log(bounds.lambda2_min));
    const Eigen::Vector2d upper(std::log(bounds.lambda1_max),
                                std::log(bounds.lambda2_max));
    const Eigen::Vector2d init =
        Eigen::Vector2d(std::log(lambda1_init), std::log(lambda2_init))
            .cwiseMax(lower)
            .cwiseMin(upper);

    auto objective = [&](const Eigen::VectorXd& x) {
        return evidence.negative_log_ml(std::exp(x[0]), std::exp(x[1]));
    };
    auto safe = [&](const Eigen::VectorXd& x) {
        try
        {
            return objective(x);
        }
        catch (const std::exception&)
        {
            return std::numeric_limits<double>::infinity();
        }
    };

    LambdaFit fit;
    fit.lambda1     = std::exp(init[0]);
    fit.lambda2     = std::exp(init[1]);
    fit.initial_nll = safe(init);
    fit.nll         = fit.initial_nll;

    // lambda1 spans many decades; scan it before the simplex.
    Eigen::VectorXd start = init;
    double best           = fit.initial_nll;
    const int scan        = 9;
    for (int k = 0; k < scan; ++k)
    {
        Eigen::Vector2d x(lower[0] + (upper[0] - lower[0]) * k / (scan - 1),
                          init[1]);
        const double v = safe(x);
        ++fit.evaluations;
        if (v < best)
        {
            best  = v;
            start = x;
        }
    }

    NelderMeadOptions opts;
    opts.budget = budget;
    const MinimizeResult res =
        nelder_mead(objective, start, lower, upper, Eigen::Vector2d(1.5, 0.7),
                    opts);
    fit.evaluations += res.evaluations + 1;

    if (res.finite && res.value < fit.nll)
    {
        fit.lambda1 = std::exp(res.x[0]);
        fit.lambda2 = std::exp(res.x[1]);
        fit.nll     = res.value;
    }
    else if (best < fit.nll)
    {
        fit.lambda1 = std::exp(start[0]);
        fit.lambda2 = std::exp(start[1]);
        fit.nll     = best;
    }
    fit.failed = !std::isfinite(fit.nll);
    return fit;
}

namespace
{

// Evidence-optimal lambda2 with the rank penalty switched off.
std::pair<double, double> tune_lambda2(const SsrEvidence& ev, int budget)
{
    auto objective = [&](const Eigen::VectorXd& x) {
        return ev.negative_log_ml(0.0, std::exp(x[0]));
    };
    const double span = 8.0 * std::log(10.0);
    NelderMeadOptions opts;
    opts.budget = budget;
    const MinimizeResult res = nelder_mead(
        objective, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -span),
        Eigen::VectorXd::Constant(1, span), Eigen::VectorXd::Constant(1, 1.0),
        opts);
    if (!res.finite)
        throw NumericalError("ssr_fit: stable-spline evidence not finite");
    return {std::exp(res.x[0]), res.value};
}

} // namespace

SsrResult ssr_fit(const Datasetd& d, Index length, int order,
                  const SsrOptions& options)
{
    const Index p = d.output_count(), m = d.input_count();
    const Index N = d.samples();

    SsrResult out;
    out.ss    = ss_estimate(d, length, order);
    out.sigma = out.ss.sigma;
    out.theta = out.ss.theta;
    out.spec  = options.weighted ? weighted_spec(d, length)
                                 : HankelSpecd(length, p, m);

    const Eigen::MatrixXd K = assemble_prior(out.ss.kernel);
    SsrEvidence ev(d, K, out.sigma, out.spec);

    const auto [lambda2_ss, nll_ss] =
        tune_lambda2(ev, options.optimizer_budget);
    out.lambda2_ss    = lambda2_ss;
    out.lambda2_floor = options.lambda2_floor_ratio * lambda2_ss;

    if (options.disable_rank_penalty)
    {
        SsrState s;
        s.iteration = 0;
        s.theta     = ev.estimate(0.0, lambda2_ss);
        s.lambda2   = lambda2_ss;
        s.Q         = ev.q();
        s.nll       = nll_ss;
        out.theta   = s.theta;
        out.trace.push_back(std::move(s));
        return out;
    }

    LambdaBounds bounds;
    bounds.lambda1_min = options.lambda1_min;
    bounds.lambda1_max = options.lambda1_max;
    bounds.lambda2_min = out.lambda2_floor;
    bounds.lambda2_max = 1e6 * lambda2_ss;

    try
    {
        // Q(0) from the stable-spline estimate, then lambdas(0).
        ev.set_q(update_q(out.ss.theta, out.spec, N));
        const LambdaFit fit0 = optimize_lambdas(ev, 1.0, lambda2_ss, bounds,
                                                options.optimizer_budget);
        if (fit0.failed)
            throw NumericalError("ssr_fit: evidence not finite at Q(0)");
        SsrState s0;
        s0.iteration = 0;
        s0.lambda1   = fit0.lambda1;
        s0.lambda2   = fit0.lambda2;
        s0.Q         = ev.q();
        s0.nll       = fit0.nll;
        s0.theta     = ev.estimate(fit0.lambda1, fit0.lambda2);
        out.trace.push_back(std::move(s0));

        for (int k = 1; k <= options.max_iter; ++k)
        {
            const SsrState& last = out.trace.back();
            ev.set_q(update_q(last.theta, out.spec, N));
            const LambdaFit fit =
                optimize_lambdas(ev, last.lambda1, last.lambda2, bounds,
                                 options.optimizer_budget);
            if (fit.failed || !(fit.nll < last.nll))
            {
                out.stopped_on_evidence = true;
                break;
            }
            SsrState s;
            s.iteration = k;
            s.lambda1   = fit.lambda1;
            s.lambda2   = fit.lambda2;
            s.Q         = ev.q();
            s.nll       = fit.nll;
            s.theta     = ev.estimate(fit.lambda1, fit.lambda2);
            out.trace.push_back(std::move(s));
        }
    }
    catch (const std::exception& e)
    {
        out.warning    = true;
        out.diagnostic = e.what();
    }

    if (!out.trace.empty())
        out.theta = out.trace.back().theta;
    return out;
}

//-----------------------------------------------------------------------------
// Variational bound
//-----------------------------------------------------------------------------

namespace
{

// H~ H~^T, with 1e-12 added to the diagonal when it is singular.
Eigen::MatrixXd hankel_gram(const ImpulseResponsed& theta,
                            const HankelSpecd& spec)
{
    const Eigen::MatrixXd H = weighted_hankel(theta, spec);
    Eigen::MatrixXd G       = H * H.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(G);
    if (llt.info() != Eigen::Success ||
        (llt.matrixLLT().diagonal().array() <= 0.0).any())
        G.diagonal().array() += 1e-12;
    return G;
}

double logdet_spd(const Eigen::MatrixXd& M)
{
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success)
        throw NumericalError("log-determinant of a non positive definite matrix");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double bound_rhs(const Eigen::MatrixXd& G, const Eigen::MatrixXd& Psi)
{
    Eigen::LLT<Eigen::MatrixXd> llt(Psi);
    if (llt.info() != Eigen::Success)
        throw std::invalid_argument("variational bound: Psi must be PD");
    const double trace = llt.solve(G).trace();
    const double logdet =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    return trace + logdet - double(G.rows());
}

} // namespace

VariationalBound variational_bound_check(const ImpulseResponsed& theta,
                                         const HankelSpecd& spec)
{
    const Eigen::MatrixXd G = hankel_gram(theta, spec);
    return {logdet_spd(G), bound_rhs(G, G)};
}

double variational_bound_rhs(const ImpulseResponsed& theta,
                             const HankelSpecd& spec,
                             const Eigen::MatrixXd& Psi)
{
    return bound_rhs(hankel_gram(theta, spec), Psi);
}

} // namespace hankel_ssr
