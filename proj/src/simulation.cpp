#include "hankel_ssr/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Eigenvalues>

namespace hankel_ssr
{

std::string to_string(Scenario s)
{
    switch (s)
    {
    case Scenario::S1: return "s1";
    case Scenario::S2: return "s2";
    case Scenario::S3: return "s3";
    }
    return "?";
}

Scenario parse_scenario(const std::string& name)
{
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return char(std::tolower(ch)); });
    if (lower == "s1")
        return Scenario::S1;
    if (lower == "s2")
        return Scenario::S2;
    if (lower == "s3")
        return Scenario::S3;
    throw std::invalid_argument("unknown scenario '" + name + "'");
}

ScenarioConfig ScenarioConfig::defaults(Scenario id)
{
    ScenarioConfig c;
    c.id = id;
    switch (id)
    {
    case Scenario::S1:
        c.samples      = 500;
        c.length       = 80;
        c.snr          = {1.0, 4.0};
        c.kernel_order = 1;
        break;
    case Scenario::S2:
        c.samples      = 500;
        c.length       = 50;
        c.snr          = {1.0, 4.0};
        c.kernel_order = 2;
        break;
    case Scenario::S3:
        c.samples      = 1000;
        c.length       = 60;
        c.snr          = {1.0, 10.0};
        c.kernel_order = 1;
        break;
    }
    return c;
}

//-----------------------------------------------------------------------------
// TrueSystem
//-----------------------------------------------------------------------------

ImpulseResponsed TrueSystem::impulse_response(Index length) const
{
    ImpulseResponsed g(outputs(), inputs(), length);
    Eigen::MatrixXd AkB = B;
    for (Index k = 0; k < length; ++k)
    {
        const Eigen::MatrixXd gk = C * AkB;
        for (Index i = 0; i < outputs(); ++i)
            for (Index j = 0; j < inputs(); ++j)
                g.coefficient(k, i, j) = gk(i, j);
        AkB = A * AkB;
    }
    return g;
}

double TrueSystem::spectral_radius() const
{
    if (A.size() == 0)
        return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd TrueSystem::simulate(const Eigen::MatrixXd& u) const
{
    if (u.cols() != inputs())
        throw std::invalid_argument("TrueSystem::simulate: input width");
    Eigen::MatrixXd y(u.rows(), outputs());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(order());
    for (Index t = 0; t < u.rows(); ++t)
    {
        y.row(t) = (C * x).transpose();
        x        = A * x + B * u.row(t).transpose();
    }
    return y;
}

//-----------------------------------------------------------------------------
// Generators
//-----------------------------------------------------------------------------

namespace
{

using Rng = std::mt19937_64;

constexpr Index burn_in = 500;

Eigen::VectorXd white_noise(Rng& rng, Index n)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd e(n);
    for (Index k = 0; k < n; ++k)
        e[k] = normal(rng);
    return e;
}

// Block-diagonal real modal form; poles uniform in the disc of `radius`,
// complex pairs and real poles mixed at random.
TrueSystem random_system(Rng& rng, Index order, double radius, Index outputs,
                         Index inputs)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(order, order);
    Index k           = 0;
    while (k < order)
    {
        if (order - k >= 2 && unit(rng) < 0.5)
        {
            const double r   = radius * std::sqrt(unit(rng));
            const double phi = std::numbers::pi * unit(rng);
            const double re = r * std::cos(phi), im = r * std::sin(phi);
            A(k, k)         = re;
            A(k, k + 1)     = im;
            A(k + 1, k)     = -im;
            A(k + 1, k + 1) = re;
            k += 2;
        }
        else
        {
            A(k, k) = radius * (2.0 * unit(rng) - 1.0);
            k += 1;
        }
    }
    TrueSystem sys;
    sys.A = A;
    sys.B.resize(order, inputs);
    sys.C.resize(outputs, order);
    for (Index i = 0; i < sys.B.size(); ++i)
        sys.B.data()[i] = normal(rng);
    for (Index i = 0; i < sys.C.size(); ++i)
        sys.C.data()[i] = normal(rng);

    const double rho = sys.spectral_radius();
    if (rho > radius)
        sys.A *= radius / rho;
    return sys;
}

} // namespace

Eigen::VectorXd butterworth_lowpass(const Eigen::VectorXd& x, double cutoff)
{
    const double wc = std::clamp(cutoff, 1e-3, 0.999);
    const double K  = std::tan(std::numbers::pi * wc / 2.0);
    const int order = 8;

    Eigen::VectorXd y = x;
    for (int s = 0; s < order / 2; ++s)
    {
        const double q =
            1.0 / (2.0 * std::sin((2.0 * s + 1.0) * std::numbers::pi /
                                  (2.0 * order)));
        const double norm = 1.0 / (1.0 + K / q + K * K);
        const double b0 = K * K * norm, b1 = 2.0 * b0, b2 = b0;
        const double a1 = 2.0 * (K * K - 1.0) * norm;
        const double a2 = (1.0 - K / q + K * K) * norm;

        double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
        for (Index n = 0; n < y.size(); ++n)
        {
            const double xn = y[n];
            const double yn = b0 * xn + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = xn;
            y2 = y1;
            y1 = yn;
            y[n] = yn;
        }
    }
    return y;
}

ScenarioDraw scenario_s1(std::uint64_t seed, Index samples)
{
    Rng rng(seed);
    ScenarioDraw draw;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
    A.topLeftCorner<2, 2>() << 0.8, 0.5, -0.5, 0.8;
    A.bottomRightCorner<2, 2>() << 0.2, 0.9, -0.9, 0.2;
    Eigen::MatrixXd B(4, 1);
    B << 1, 0, 2, 0;
    Eigen::MatrixXd C(3, 4);
    C << 1, 1, 1, 1,
         0, 0.1, 0, 0.1,
         20, 0, 2.5, 0;
    draw.system = {A, B, C};

    std::uniform_real_distribution<double> band(0.8, 1.0);
    draw.cutoff = band(rng);
    const Eigen::VectorXd e = white_noise(rng, samples + burn_in);
    draw.input = butterworth_lowpass(e, draw.cutoff).tail(samples);
    return draw;
}

ScenarioDraw scenario_s2(std::uint64_t seed, Index samples)
{
    Rng rng(seed);
    std::uniform_int_distribution<int> order(1, 10);
    ScenarioDraw draw;
    draw.system = random_system(rng, order(rng), 0.85, 3, 1);
    draw.input  = white_noise(rng, samples);
    return draw;
}

ScenarioDraw scenario_s3(std::uint64_t seed, Index samples)
{
    Rng rng(seed);
    std::uniform_int_distribution<int> order(1, 30);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    ScenarioDraw draw;
    draw.system = random_system(rng, order(rng), 0.95, 1, 1);

    // u = e / (1 - a1 z^-1 - a2 z^-2), conjugate poles inside radius 0.9.
    const double r   = 0.9 * std::sqrt(unit(rng));
    const double phi = std::numbers::pi * unit(rng);
    const double a1  = 2.0 * r * std::cos(phi);
    const double a2  = -r * r;
    const Eigen::VectorXd e = white_noise(rng, samples + burn_in);
    Eigen::VectorXd u(e.size());
    for (Index n = 0; n < e.size(); ++n)
        u[n] = e[n] + (n >= 1 ? a1 * u[n - 1] : 0.0) +
               (n >= 2 ? a2 * u[n - 2] : 0.0);
    draw.input = u.tail(samples);
    return draw;
}

ScenarioDraw draw_scenario(Scenario id, std::uint64_t seed, Index samples)
{
    switch (id)
    {
    case Scenario::S1: return scenario_s1(seed, samples);
    case Scenario::S2: return scenario_s2(seed, samples);
    case Scenario::S3: return scenario_s3(seed, samples);
    }
    throw std::invalid_argument("draw_scenario: unknown scenario");
}

//-----------------------------------------------------------------------------
// Simulation and fit
//-----------------------------------------------------------------------------

SimulatedData simulate_oe(const TrueSystem& sys, const Eigen::MatrixXd& u,
                          const SnrRange& snr, std::uint64_t seed)
{
    if (sys.spectral_radius() >= 1.0)
        throw std::invalid_argument("simulate_oe: system is not stable");
    SimulatedData out;
    out.clean      = sys.simulate(u);
    const Index p  = sys.outputs();
    out.snr        = Eigen::VectorXd::Constant(p, snr.low);
    out.noise_std  = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd y = out.clean;

    if (!snr.is_noise_free())
    {
        if (!(snr.low > 0.0) || snr.high < snr.low)
            throw std::invalid_argument("simulate_oe: bad SNR range");
        Rng rng(seed);
        std::uniform_real_distribution<double> draw(snr.low, snr.high);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < p; ++i)
        {
            const auto z     = out.clean.col(i);
            const double std = std::sqrt((z.array() - z.mean()).square().mean());
            out.snr[i]       = snr.high > snr.low ? draw(rng) : snr.low;
            out.noise_std[i] = std / out.snr[i];
            for (Index t = 0; t < y.rows(); ++t)
                y(t, i) += out.noise_std[i] * normal(rng);
        }
    }
    out.data = Datasetd(u, y);
    return out;
}

FitValue fit_metric(const ImpulseResponsed& estimate,
                    const ImpulseResponsed& truth)
{
    if (estimate.outputs() != truth.outputs() ||
        estimate.inputs() != truth.inputs() ||
        estimate.length() != truth.length())
        throw std::invalid_argument("fit_metric: dimension mismatch");
    FitValue fit;
    double sum = 0.0;
    Index used = 0;
    for (Index i = 0; i < truth.outputs(); ++i)
        for (Index j = 0; j < truth.inputs(); ++j)
        {
            const Eigen::VectorXd g0 = truth.channel(i, j);
            const double den = (g0.array() - g0.mean()).matrix().norm();
            if (!(den > 1e-14 * g0.norm()) || den == 0.0)
            {
                ++fit.excluded;
                continue;
            }
            const double num = (g0 - estimate.channel(i, j)).norm();
            sum += 100.0 * (1.0 - num / den);
            ++used;
        }
    fit.value = used > 0 ? sum / double(used)
                         : std::numeric_limits<double>::quiet_NaN();
    return fit;
}

} // namespace hankel_ssr
