///
/// \file io.hpp
///
/// File formats:
///
///  - dataset CSV: header `t,u1..um,y1..yp`, one row per sample, t = 1..N;
///  - system JSON: {"A", "B", "C" (row arrays), "theta0"};
///  - estimate JSON: {"estimator", "p", "m", "T", "theta", "trace", "sigma"},
///    trace entries {"k", "lambda1", "lambda2", "nll"};
///  - study CSV: `scenario,run,seed,estimator,fit,wall_ms,iters,lambda1,lambda2,nll`;
///  - summary JSON: per estimator {median, q1, q3, lo_whisker, hi_whisker,
///    outliers, n}.
///

#ifndef HANKEL_SSR_IO_HPP
#define HANKEL_SSR_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hankel_ssr/harness.hpp"

namespace hankel_ssr
{

class IoError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

void write_dataset_csv(std::ostream& os, const Datasetd& d);
void write_dataset_csv(const std::filesystem::path& path, const Datasetd& d);
Datasetd read_dataset_csv(std::istream& is);
Datasetd read_dataset_csv(const std::filesystem::path& path);

struct SystemFile
{
    TrueSystem system;
    ImpulseResponsed theta0;
};

void write_system_json(const std::filesystem::path& path,
                       const TrueSystem& sys, Index length);
SystemFile read_system_json(const std::filesystem::path& path);

struct EstimateFile
{
    std::string estimator;
    ImpulseResponsed theta;
    std::vector<SsrState> trace;
    Eigen::VectorXd sigma;
};

std::string estimate_json(const std::string& estimator,
                          const ImpulseResponsed& theta,
                          const std::vector<SsrState>& trace,
                          const Eigen::VectorXd& sigma);
void write_estimate_json(const std::filesystem::path& path,
                         const std::string& estimator,
                         const ImpulseResponsed& theta,
                         const std::vector<SsrState>& trace,
                         const Eigen::VectorXd& sigma);
/// Trace states come back with theta and Q left empty.
EstimateFile read_estimate_json(const std::filesystem::path& path);

/// `record_timing = false` leaves wall_ms empty so the file depends only on
/// the seed and the configuration.
void write_study_csv(std::ostream& os, const std::vector<RunReport>& reports,
                     bool record_timing);
void write_study_csv(const std::filesystem::path& path,
                     const std::vector<RunReport>& reports,
                     bool record_timing);
/// Parses a study CSV back into reports (timing fields are ignored).
std::vector<RunReport> read_study_csv(const std::filesystem::path& path);

std::string summary_json(const std::map<EstimatorKind, BoxStats>& summary);
void write_summary_json(const std::filesystem::path& path,
                        const std::map<EstimatorKind, BoxStats>& summary);

/// Median fit per estimator, one row for the scenario.
void print_median_table(std::ostream& os, Scenario scenario,
                        const std::map<EstimatorKind, BoxStats>& summary);

} // namespace hankel_ssr

#endif // HANKEL_SSR_IO_HPP
