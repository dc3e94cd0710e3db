///
/// \file simulation.hpp
///
/// Benchmark data generation: the three Monte Carlo scenarios, output-error
/// simulation with per-channel SNR calibration and the impulse-response fit.
///

#ifndef HANKEL_SSR_SIMULATION_HPP
#define HANKEL_SSR_SIMULATION_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>

#include "hankel_ssr/core.hpp"

namespace hankel_ssr
{

enum class Scenario
{
    S1,
    S2,
    S3
};

std::string to_string(Scenario s);
/// Accepts "s1"/"S1" etc.
Scenario parse_scenario(const std::string& name);

/// SNR interval; an unbounded interval means noise-free output.
struct SnrRange
{
    double low  = 1.0;
    double high = 4.0;

    static SnrRange noise_free()
    {
        return {std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
    }
    bool is_noise_free() const { return std::isinf(low); }
};

struct ScenarioConfig
{
    Scenario id         = Scenario::S1;
    Index samples       = 500;
    Index length        = 80;
    SnrRange snr        = {1.0, 4.0};
    std::uint64_t seed  = 1;
    int runs            = 20;
    int kernel_order    = 1;

    /// Default N, T, SNR range and kernel order for the scenario.
    static ScenarioConfig defaults(Scenario id);
};

///
/// x(t+1) = A x(t) + B u(t), y(t) = C x(t); one-step delay, so
/// g(k) = C A^{k-1} B for k >= 1.
///
struct TrueSystem
{
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::MatrixXd C;

    Index order() const { return A.rows(); }
    Index outputs() const { return C.rows(); }
    Index inputs() const { return B.cols(); }

    ImpulseResponsed impulse_response(Index length) const;
    double spectral_radius() const;
    /// Noise-free response from zero initial state; u is N x m.
    Eigen::MatrixXd simulate(const Eigen::MatrixXd& u) const;
};

struct ScenarioDraw
{
    TrueSystem system;
    /// N x m input record.
    Eigen::MatrixXd input;
    /// S1 only: normalized cutoff of the input low-pass filter.
    double cutoff = 1.0;
};

/// Fixed fourth-order 3x1 system, input low-pass filtered with a random band.
ScenarioDraw scenario_s1(std::uint64_t seed, Index samples);
/// Random 3x1 systems of order 1..10 with poles inside radius 0.85.
ScenarioDraw scenario_s2(std::uint64_t seed, Index samples);
/// Random SISO systems of order 1..30 with poles inside radius 0.95, input
/// colored by a random second-order filter.
ScenarioDraw scenario_s3(std::uint64_t seed, Index samples);

ScenarioDraw draw_scenario(Scenario id, std::uint64_t seed, Index samples);

/// Eighth-order Butterworth low-pass filter, cutoff as a fraction of Nyquist.
Eigen::VectorXd butterworth_lowpass(const Eigen::VectorXd& x, double cutoff);

struct SimulatedData
{
    Datasetd data;
    /// Noise-free output.
    Eigen::MatrixXd clean;
    /// Target SNR per output (std ratio).
    Eigen::VectorXd snr;
    Eigen::VectorXd noise_std;
};

SimulatedData simulate_oe(const TrueSystem& sys, const Eigen::MatrixXd& u,
                          const SnrRange& snr, std::uint64_t seed);

struct FitValue
{
    double value = 0.0;
    /// Channels skipped because the true response is constant.
    Index excluded = 0;
};

///
/// Average impulse-response fit over the p*m channels:
/// 100 (1 - ||theta0_ij - theta_ij|| / ||theta0_ij - mean(theta0_ij)||).
///
FitValue fit_metric(const ImpulseResponsed& estimate,
                    const ImpulseResponsed& truth);

} // namespace hankel_ssr

#endif // HANKEL_SSR_SIMULATION_HPP
