#include <cmath>
#include <limits>
#include <numbers>

#include "hankel_ssr/estimators.hpp"

namespace hankel_ssr
{

AtomDictionary atom_dictionary(Index length)
{
    if (length < 2)
        throw std::invalid_argument("atom_dictionary: length must be >= 2");

    std::vector<double> radii;
    for (int h = 0; h < 30; ++h)
        radii.push_back(0.41 + 0.02 * h);
    radii.push_back(0.995);
    radii.push_back(0.999);

    std::vector<double> angles;
    for (int k = 1; k <= 29; ++k)
        angles.push_back(k * std::numbers::pi / 30.0);

    AtomDictionary dict;
    dict.atoms.resize(length, Index(radii.size() * angles.size()));
    Index col = 0;
    for (double rho : radii)
        for (double angle : angles)
        {
            dict.poles.push_back(std::polar(rho, angle));
            // z / ((z - p)(z - p*)) = z^-1 / (1 - a1 z^-1 - a2 z^-2)
            const double a1 = 2.0 * rho * std::cos(angle);
            const double a2 = -rho * rho;
            auto g          = dict.atoms.col(col);
            g[0]            = 1.0;
            if (length > 1)
                g[1] = a1;
            for (Index n = 2; n < length; ++n)
                g[n] = a1 * g[n - 1] + a2 * g[n - 2];
            g /= g.norm();
            ++col;
        }
    return dict;
}

double lasso_kkt_residual(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double mu)
{
    const Eigen::VectorXd grad = 2.0 * X.transpose() * (y - X * w);
    double worst               = 0.0;
    for (Index j = 0; j < w.size(); ++j)
    {
        const double v = w[j] != 0.0
                             ? std::abs(grad[j] - mu * (w[j] > 0 ? 1.0 : -1.0))
                             : std::max(0.0, std::abs(grad[j]) - mu);
        worst = std::max(worst, v);
    }
    return worst;
}

namespace
{

double soft_threshold(double x, double t)
{
    if (x > t)
        return x - t;
    if (x < -t)
        return x + t;
    return 0.0;
}

// Coordinate descent on the Gram form: G = X^T X, c = X^T y.
LassoResult lasso_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& c,
                       double mu, Eigen::VectorXd w, double tolerance,
                       int max_sweeps)
{
    const Index n     = G.rows();
    Eigen::VectorXd q = G * w;

    auto kkt = [&] {
        double worst = 0.0;
        for (Index j = 0; j < n; ++j)
        {
            const double grad = 2.0 * (c[j] - q[j]);
            const double v =
                w[j] != 0.0 ? std::abs(grad - mu * (w[j] > 0 ? 1.0 : -1.0))
                            : std::max(0.0, std::abs(grad) - mu);
            worst = std::max(worst, v);
        }
        return worst;
    };

    LassoResult res;
    res.kkt_residual = kkt();
    while (res.kkt_residual > tolerance && res.sweeps < max_sweeps)
    {
        for (Index j = 0; j < n; ++j)
        {
            const double gjj = G(j, j);
            if (gjj <= 0.0)
                continue;
            const double rho   = c[j] - q[j] + gjj * w[j];
            const double wj    = soft_threshold(rho, 0.5 * mu) / gjj;
            const double delta = wj - w[j];
            if (delta != 0.0)
            {
                q += delta * G.col(j);
                w[j] = wj;
            }
        }
        ++res.sweeps;
        res.kkt_residual = kkt();
    }
    res.weights = std::move(w);
    return res;
}

void require_siso(const Datasetd& d)
{
    if (d.output_count() != 1 || d.input_count() != 1)
        throw std::invalid_argument("ATOM is SISO-only");
}

} // namespace

LassoResult lasso_coordinate_descent(const Eigen::MatrixXd& X,
                                     const Eigen::VectorXd& y, double mu,
                                     const Eigen::VectorXd& w0,
                                     double tolerance, int max_sweeps)
{
    if (w0.size() != X.cols() || y.size() != X.rows())
        throw std::invalid_argument("lasso_coordinate_descent: size mismatch");
    if (mu < 0.0)
        throw std::invalid_argument("lasso_coordinate_descent: mu must be >= 0");
    const Eigen::MatrixXd G = X.transpose() * X;
    const Eigen::VectorXd c = X.transpose() * y;
    return lasso_gram(G, c, mu, w0, tolerance, max_sweeps);
}

AtomFit atom_estimate_fixed(const Datasetd& d, Index length, double mu)
{
    require_siso(d);
    const AtomDictionary dict = atom_dictionary(length);
    const Eigen::MatrixXd X   = input_regressor(d, length) * dict.atoms;
    const Eigen::VectorXd y   = d.outputs().col(0);
    const Eigen::MatrixXd G   = X.transpose() * X;
    const Eigen::VectorXd c   = X.transpose() * y;
    const double scale        = std::max(2.0 * c.cwiseAbs().maxCoeff(), 1e-300);

    AtomFit fit;
    fit.mu      = mu;
    fit.weights = lasso_gram(G, c, mu, Eigen::VectorXd::Zero(X.cols()),
                             1e-9 * scale, 20000)
                      .weights;
    fit.theta   = ImpulseResponsed(1, 1, length, dict.atoms * fit.weights);
    return fit;
}

AtomFit atom_estimate(const Datasetd& d, Index length, int grid_size)
{
    require_siso(d);
    if (grid_size < 1)
        throw std::invalid_argument("atom_estimate: grid_size must be >= 1");
    const AtomDictionary dict = atom_dictionary(length);
    const Eigen::MatrixXd X   = input_regressor(d, length) * dict.atoms;
    const Eigen::VectorXd y   = d.outputs().col(0);
    const Index N             = d.samples();
    const Index n_train       = (3 * N) / 4;
    const Index n_valid       = N - n_train;
    if (n_train < 1 || n_valid < 1)
        throw std::invalid_argument("atom_estimate: too few samples");

    const auto Xt           = X.topRows(n_train);
    const auto Xv           = X.bottomRows(n_valid);
    const Eigen::MatrixXd G = Xt.transpose() * Xt;
    const Eigen::VectorXd c = Xt.transpose() * y.head(n_train);
    const double mu_max     = 2.0 * c.cwiseAbs().maxCoeff();

    AtomFit fit;
    if (!(mu_max > 0.0))
    {
        fit.weights = Eigen::VectorXd::Zero(X.cols());
        fit.theta   = ImpulseResponsed(1, 1, length);
        return fit;
    }

    // Path from mu_max (w = 0) down four decades, warm-started.
    const double tol = 1e-7 * mu_max;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(X.cols());
    Eigen::VectorXd best_w = w;
    double best_err        = std::numeric_limits<double>::infinity();
    double best_mu         = mu_max;
    for (int k = 0; k < grid_size; ++k)
    {
        const double frac =
            grid_size > 1 ? double(k) / double(grid_size - 1) : 0.0;
        const double mu = mu_max * std::pow(1e-4, frac);
        w               = lasso_gram(G, c, mu, w, tol, 20000).weights;
        const double err = (y.tail(n_valid) - Xv * w).squaredNorm();
        fit.grid.push_back(mu);
        fit.validation_error.push_back(err);
        if (err < best_err)
        {
            best_err = err;
            best_mu  = mu;
            best_w   = w;
        }
    }

    // Refit on all samples; the squared loss grows with the sample count.
    const Eigen::MatrixXd Gf = X.transpose() * X;
    const Eigen::VectorXd cf = X.transpose() * y;
    fit.mu      = best_mu * double(N) / double(n_train);
    fit.weights = lasso_gram(Gf, cf, fit.mu, best_w, tol, 20000).weights;
    fit.theta   = ImpulseResponsed(1, 1, length, dict.atoms * fit.weights);
    return fit;
}

} // namespace hankel_ssr
