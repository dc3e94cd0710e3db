#ifndef HANKEL_SSR_HARNESS_HPP
#define HANKEL_SSR_HARNESS_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hankel_ssr/estimators.hpp"
#include "hankel_ssr/simulation.hpp"

namespace hankel_ssr
{

enum class EstimatorKind
{
    SS,
    SSR,
    SSRWeighted,
    Atom
};

std::string to_string(EstimatorKind k);
/// "ss", "ssr", "ssr-weighted", "atom".
EstimatorKind parse_estimator(const std::string& name);
std::vector<EstimatorKind> parse_estimator_list(const std::string& csv);

/// Per-run seed: a splitmix64 hash of (master seed, scenario, run index).
std::uint64_t derive_run_seed(std::uint64_t master, Scenario scenario,
                              int run);
/// Seed for the measurement noise of a run, derived from the run seed.
std::uint64_t derive_noise_seed(std::uint64_t run_seed);

struct EstimatorOutcome
{
    EstimatorKind kind = EstimatorKind::SS;
    bool ok            = false;
    double fit         = 0.0;
    double wall_ms     = 0.0;
    /// SSR only.
    std::optional<int> iterations;
    std::optional<double> lambda1;
    std::optional<double> lambda2;
    std::optional<double> nll;
    std::string error;
};

struct RunReport
{
    Scenario scenario = Scenario::S1;
    int run           = 0;
    std::uint64_t seed = 0;
    Index system_order = 0;
    std::vector<EstimatorOutcome> outcomes;
};

struct StudyConfig
{
    ScenarioConfig scenario;
    std::vector<EstimatorKind> estimators;
    int workers = 1;
};

/// Output of one estimator on one dataset.
struct EstimateOutput
{
    ImpulseResponsed theta;
    std::vector<SsrState> trace;
    Eigen::VectorXd sigma;
};

/// Runs a single estimator. ATOM requires p = m = 1.
EstimateOutput run_estimator(EstimatorKind kind, const Datasetd& d,
                             Index length, int kernel_order);

/// Simulates one run of a study and fits every requested estimator.
RunReport run_single(const StudyConfig& config, int run);

/// All runs, sorted by run index; deterministic for any worker count.
std::vector<RunReport> run_study(const StudyConfig& config);

struct BoxStats
{
    double median     = 0.0;
    double q1         = 0.0;
    double q3         = 0.0;
    double lo_whisker = 0.0;
    double hi_whisker = 0.0;
    std::vector<double> outliers;
    std::size_t n        = 0;
    std::size_t failures = 0;
};

/// Type-7 quantile of sorted values.
double quantile_sorted(const std::vector<double>& sorted, double prob);

/// Quartiles by linear interpolation, whiskers at the most extreme points
/// within 1.5 IQR of the box, everything beyond listed as outliers.
BoxStats box_stats(std::vector<double> values);

std::map<EstimatorKind, BoxStats> aggregate(const std::vector<RunReport>& reports);

/// Fraction of runs in which at least one estimator failed.
double failure_ratio(const std::vector<RunReport>& reports);

} // namespace hankel_ssr

#endif // HANKEL_SSR_HARNESS_HPP
