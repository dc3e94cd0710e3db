#include "hankel_ssr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

namespace hankel_ssr
{

std::string to_string(EstimatorKind k)
{
    switch (k)
    {
    case EstimatorKind::SS: return "ss";
    case EstimatorKind::SSR: return "ssr";
    case EstimatorKind::SSRWeighted: return "ssr-weighted";
    case EstimatorKind::Atom: return "atom";
    }
    return "?";
}

EstimatorKind parse_estimator(const std::string& name)
{
    if (name == "ss")
        return EstimatorKind::SS;
    if (name == "ssr")
        return EstimatorKind::SSR;
    if (name == "ssr-weighted")
        return EstimatorKind::SSRWeighted;
    if (name == "atom")
        return EstimatorKind::Atom;
    throw std::invalid_argument("unknown estimator '" + name + "'");
}

std::vector<EstimatorKind> parse_estimator_list(const std::string& csv)
{
    std::vector<EstimatorKind> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
    {
        if (item.empty())
            continue;
        const EstimatorKind k = parse_estimator(item);
        if (std::find(out.begin(), out.end(), k) == out.end())
            out.push_back(k);
    }
    if (out.empty())
        throw std::invalid_argument("no estimators selected");
    return out;
}

namespace
{

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t derive_run_seed(std::uint64_t master, Scenario scenario, int run)
{
    std::uint64_t h = splitmix64(master);
    h = splitmix64(h ^ (static_cast<std::uint64_t>(scenario) + 1));
    h = splitmix64(h ^ static_cast<std::uint64_t>(run));
    return h;
}

std::uint64_t derive_noise_seed(std::uint64_t run_seed)
{
    return splitmix64(run_seed ^ 0x6e6f697365ULL);
}

EstimateOutput run_estimator(EstimatorKind kind, const Datasetd& d,
                             Index length, int kernel_order)
{
    EstimateOutput out;
    switch (kind)
    {
    case EstimatorKind::SS:
    {
        SsResult ss = ss_estimate(d, length, kernel_order);
        out.theta   = std::move(ss.theta);
        out.sigma   = std::move(ss.sigma);
        break;
    }
    case EstimatorKind::SSR:
    case EstimatorKind::SSRWeighted:
    {
        SsrOptions opts;
        opts.weighted = kind == EstimatorKind::SSRWeighted;
        SsrResult r   = ssr_fit(d, length, kernel_order, opts);
        if (r.warning)
            spdlog::debug("ssr: {}", r.diagnostic);
        out.theta = std::move(r.theta);
        out.trace = std::move(r.trace);
        out.sigma = std::move(r.sigma);
        break;
    }
    case EstimatorKind::Atom:
    {
        AtomFit a = atom_estimate(d, length);
        out.theta = std::move(a.theta);
        out.sigma = estimate_noise_variance(d, out.theta);
        break;
    }
    }
    return out;
}

RunReport run_single(const StudyConfig& config, int run)
{
    const ScenarioConfig& sc = config.scenario;
    RunReport report;
    report.scenario = sc.id;
    report.run      = run;
    report.seed     = derive_run_seed(sc.seed, sc.id, run);

    const ScenarioDraw draw = draw_scenario(sc.id, report.seed, sc.samples);
    report.system_order     = draw.system.order();
    const SimulatedData sim = simulate_oe(draw.system, draw.input, sc.snr,
                                          derive_noise_seed(report.seed));
    const ImpulseResponsed truth = draw.system.impulse_response(sc.length);

    for (EstimatorKind kind : config.estimators)
    {
        EstimatorOutcome o;
        o.kind          = kind;
        const auto tick = std::chrono::steady_clock::now();
        try
        {
            const EstimateOutput est =
                run_estimator(kind, sim.data, sc.length, sc.kernel_order);
            o.fit = fit_metric(est.theta, truth).value;
            o.ok  = std::isfinite(o.fit);
            if (!o.ok)
                o.error = "fit undefined";
            if (!est.trace.empty())
            {
                o.iterations = static_cast<int>(est.trace.size());
                o.lambda1    = est.trace.back().lambda1;
                o.lambda2    = est.trace.back().lambda2;
                o.nll        = est.trace.back().nll;
            }
        }
        catch (const std::exception& e)
        {
            o.ok    = false;
            o.error = e.what();
            spdlog::warn("{} run {} {}: {}", to_string(sc.id), run,
                         to_string(kind), e.what());
        }
        o.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - tick)
                        .count();
        report.outcomes.push_back(std::move(o));
    }
    spdlog::debug("{} run {} done", to_string(sc.id), run);
    return report;
}

std::vector<RunReport> run_study(const StudyConfig& config)
{
    const int runs = config.scenario.runs;
    if (runs < 0)
        throw std::invalid_argument("run_study: negative run count");
    std::vector<RunReport> reports(static_cast<std::size_t>(runs));
    std::atomic<int> next{0};

    auto worker = [&] {
        for (int k = next++; k < runs; k = next++)
            reports[static_cast<std::size_t>(k)] = run_single(config, k);
    };

    const int workers = std::clamp(config.workers, 1, std::max(runs, 1));
    if (workers == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back(worker);
    }
    return reports;
}

double quantile_sorted(const std::vector<double>& sorted, double prob)
{
    if (sorted.empty())
        throw std::invalid_argument("quantile_sorted: empty input");
    const double h  = (double(sorted.size()) - 1.0) * prob;
    const auto lo   = static_cast<std::size_t>(std::floor(h));
    const auto hi   = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("box_stats: no values");
    std::sort(values.begin(), values.end());
    BoxStats b;
    b.n             = values.size();
    b.median        = quantile_sorted(values, 0.5);
    b.q1            = quantile_sorted(values, 0.25);
    b.q3            = quantile_sorted(values, 0.75);
    const double iqr = b.q3 - b.q1;
    const double lo  = b.q1 - 1.5 * iqr;
    const double hi  = b.q3 + 1.5 * iqr;
    b.lo_whisker     = b.q1;
    b.hi_whisker     = b.q3;
    for (double v : values)
    {
        if (v < lo || v > hi)
            b.outliers.push_back(v);
        else
        {
            b.lo_whisker = std::min(b.lo_whisker, v);
            b.hi_whisker = std::max(b.hi_whisker, v);
        }
    }
    return b;
}

std::map<EstimatorKind, BoxStats>
aggregate(const std::vector<RunReport>& reports)
{
    if (reports.empty())
        throw std::invalid_argument("aggregate: no reports");
    std::map<EstimatorKind, std::vector<double>> fits;
    std::map<EstimatorKind, std::size_t> failures;
    for (const RunReport& r : reports)
        for (const EstimatorOutcome& o : r.outcomes)
        {
            if (o.ok)
                fits[o.kind].push_back(o.fit);
            else
                ++failures[o.kind];
        }
    std::map<EstimatorKind, BoxStats> out;
    for (const auto& [kind, count] : failures)
        out[kind].failures = count;
    for (auto& [kind, values] : fits)
    {
        const std::size_t failed = out[kind].failures;
        out[kind]                = box_stats(std::move(values));
        out[kind].failures       = failed;
    }
    return out;
}

double failure_ratio(const std::vector<RunReport>& reports)
{
    if (reports.empty())
        return 0.0;
    std::size_t failed = 0;
    for (const RunReport& r : reports)
        if (std::any_of(r.outcomes.begin(), r.outcomes.end(),
                        [](const EstimatorOutcome& o) { return !o.ok; }))
            ++failed;
    return double(failed) / double(reports.size());
}

} // namespace hankel_ssr
