// hankel-ssr: simulate benchmark data, fit a dataset, run Monte Carlo studies.
//
// Exit codes: 0 success, 1 numerical failure, 2 I/O error, 3 usage or
// compatibility error, 4 more than 20% of benchmark runs failed.

#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "hankel_ssr/io.hpp"

namespace fs = std::filesystem;
using namespace hankel_ssr;

namespace
{

enum Exit
{
    ok           = 0,
    numerical    = 1,
    io_error     = 2,
    usage_error  = 3,
    runs_failed  = 4,
};

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

struct Options
{
    std::string scenario = "s1";
    std::optional<Index> samples;
    std::optional<Index> length;
    int runs = 20;
    std::uint64_t seed = 1;
    std::string estimators;
    std::optional<int> kernel_order;
    bool weighted = false;
    std::string out = ".";
    int workers = 1;
    bool timing = false;
    std::string dataset;
    std::string study;
};

void setup_logging()
{
    auto logger = spdlog::stderr_color_mt("hankel-ssr");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("HANKEL_SSR_LOG"))
        spdlog::set_level(spdlog::level::from_str(env));
}

ScenarioConfig scenario_config(const Options& o)
{
    ScenarioConfig c = ScenarioConfig::defaults(parse_scenario(o.scenario));
    c.seed = o.seed;
    c.runs = o.runs;
    if (o.samples)
        c.samples = *o.samples;
    if (o.length)
        c.length = *o.length;
    if (o.kernel_order)
        c.kernel_order = *o.kernel_order;
    if (c.samples < 1 || c.length < 2 || c.runs < 1)
        throw UsageError("need --n >= 1, --t >= 2 and --runs >= 1");
    return c;
}

std::vector<EstimatorKind> estimator_list(const Options& o,
                                          const std::string& fallback)
{
    auto kinds = parse_estimator_list(o.estimators.empty() ? fallback
                                                           : o.estimators);
    if (o.weighted)
        for (auto& k : kinds)
            if (k == EstimatorKind::SSR)
                k = EstimatorKind::SSRWeighted;
    return kinds;
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir))
        throw IoError("cannot create output directory " + dir.string());
}

std::string run_stem(Scenario s, int run)
{
    std::ostringstream name;
    name << to_string(s) << "_run" << std::setw(3) << std::setfill('0') << run;
    return name.str();
}

int cmd_simulate(const Options& o)
{
    const ScenarioConfig c = scenario_config(o);
    const fs::path dir(o.out);
    ensure_dir(dir);
    for (int run = 0; run < c.runs; ++run)
    {
        const std::uint64_t seed = derive_run_seed(c.seed, c.id, run);
        const ScenarioDraw draw  = draw_scenario(c.id, seed, c.samples);
        const SimulatedData sim  = simulate_oe(draw.system, draw.input, c.snr,
                                               derive_noise_seed(seed));
        const std::string stem = run_stem(c.id, run);
        write_dataset_csv(dir / (stem + ".csv"), sim.data);
        write_system_json(dir / (stem + ".system.json"), draw.system, c.length);
        std::cout << (dir / (stem + ".csv")).string() << '\n';
    }
    return ok;
}

int cmd_estimate(const Options& o)
{
    const fs::path data_path(o.dataset);
    const Datasetd d = read_dataset_csv(data_path);

    const fs::path system_path =
        data_path.parent_path() / (data_path.stem().string() + ".system.json");
    std::optional<SystemFile> truth;
    if (fs::exists(system_path))
        truth = read_system_json(system_path);

    Index length = 50;
    if (o.length)
        length = *o.length;
    else if (truth)
        length = truth->theta0.length();
    if (length < 2)
        throw UsageError("--t must be >= 2");
    const int order = o.kernel_order.value_or(1);

    const auto kinds = estimator_list(o, "ssr");
    for (EstimatorKind k : kinds)
        if (k == EstimatorKind::Atom &&
            (d.output_count() != 1 || d.input_count() != 1))
            throw UsageError("ATOM is SISO-only");

    const fs::path dir = o.out == "." && !data_path.parent_path().empty()
                             ? data_path.parent_path()
                             : fs::path(o.out);
    ensure_dir(dir);

    std::optional<ImpulseResponsed> theta0;
    if (truth)
    {
        if (truth->system.outputs() != d.output_count() ||
            truth->system.inputs() != d.input_count())
            throw UsageError("system file does not match the dataset");
        theta0 = truth->system.impulse_response(length);
    }

    for (EstimatorKind k : kinds)
    {
        const EstimateOutput est = run_estimator(k, d, length, order);
        const fs::path path =
            dir / (data_path.stem().string() + "." + to_string(k) + ".json");
        write_estimate_json(path, to_string(k), est.theta, est.trace,
                            est.sigma);
        std::cout << to_string(k) << ": " << path.string();
        if (theta0)
            std::cout << " fit " << std::setprecision(17)
                      << fit_metric(est.theta, *theta0).value;
        std::cout << '\n';
    }
    return ok;
}

int cmd_benchmark(const Options& o)
{
    StudyConfig study;
    study.scenario   = scenario_config(o);
    study.estimators = estimator_list(o, "ss,ssr");
    study.workers    = o.workers;
    if (study.scenario.id != Scenario::S3)
        for (EstimatorKind k : study.estimators)
            if (k == EstimatorKind::Atom)
                throw UsageError("ATOM is SISO-only");
    if (o.workers < 1)
        throw UsageError("--workers must be >= 1");

    const fs::path dir(o.out);
    ensure_dir(dir);
    const auto reports = run_study(study);
    write_study_csv(dir / "study.csv", reports, o.timing);
    const auto summary = aggregate(reports);
    write_summary_json(dir / "summary.json", summary);
    print_median_table(std::cout, study.scenario.id, summary);

    const double failed = failure_ratio(reports);
    if (failed > 0.0)
        std::cerr << "runs with a failed estimator: " << failed * 100.0
                  << "%\n";
    return failed > 0.2 ? runs_failed : ok;
}

int cmd_report(const Options& o)
{
    const auto reports = read_study_csv(fs::path(o.study));
    if (reports.empty())
        throw IoError("study CSV has no rows");
    const auto summary = aggregate(reports);
    print_median_table(std::cout, reports.front().scenario, summary);
    std::cout << summary_json(summary) << '\n';
    return ok;
}

} // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"Impulse-response estimation with stable-spline and Hankel "
                 "rank penalties"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&o](CLI::App* cmd) {
        cmd->add_option("--scenario", o.scenario, "s1, s2 or s3")
            ->check(CLI::IsMember({"s1", "s2", "s3", "S1", "S2", "S3"}));
        cmd->add_option("--n", o.samples, "samples per run");
        cmd->add_option("--t", o.length, "impulse response length");
        cmd->add_option("--seed", o.seed, "master seed");
        cmd->add_option("--out", o.out, "output directory");
    };
    auto add_fit = [&o](CLI::App* cmd) {
        cmd->add_option("--estimators", o.estimators,
                        "comma list of ss, ssr, ssr-weighted, atom");
        cmd->add_option("--kernel-order", o.kernel_order, "stable-spline order")
            ->check(CLI::IsMember({1, 2}));
        cmd->add_flag("--weighted", o.weighted,
                      "use the data-driven Hankel weights for ssr");
    };

    auto* simulate = app.add_subcommand("simulate", "write simulated datasets");
    add_common(simulate);
    simulate->add_option("--runs", o.runs, "number of datasets")
        ->default_val(1);

    auto* estimate = app.add_subcommand("estimate", "fit one dataset");
    estimate->add_option("dataset", o.dataset, "dataset CSV")->required();
    estimate->add_option("--t", o.length, "impulse response length");
    estimate->add_option("--out", o.out, "output directory");
    add_fit(estimate);

    auto* benchmark = app.add_subcommand("benchmark", "Monte Carlo study");
    add_common(benchmark);
    add_fit(benchmark);
    benchmark->add_option("--runs", o.runs, "Monte Carlo runs");
    benchmark->add_option("--workers", o.workers, "parallel runs");
    benchmark->add_flag("--timing", o.timing, "record wall_ms in study.csv");

    auto* report = app.add_subcommand("report", "summarize a study CSV");
    report->add_option("study", o.study, "study CSV")->required();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? ok : usage_error;
    }

    try
    {
        if (*simulate)
            return cmd_simulate(o);
        if (*estimate)
            return cmd_estimate(o);
        if (*benchmark)
            return cmd_benchmark(o);
        return cmd_report(o);
    }
    catch (const IoError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return io_error;
    }
    catch (const UsageError& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return usage_error;
    }
    catch (const std::invalid_argument& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return usage_error;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return numerical;
    }
}
