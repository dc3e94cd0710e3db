#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <doctest.h>

#include "hankel_ssr/io.hpp"
#include "oracles.hpp"

using namespace hankel_ssr;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace
{

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "hankel_ssr_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

} // namespace

TEST_CASE("seed derivation")
{
    CHECK(derive_run_seed(1, Scenario::S1, 0) == derive_run_seed(1, Scenario::S1, 0));
    CHECK(derive_run_seed(1, Scenario::S1, 0) != derive_run_seed(1, Scenario::S1, 1));
    CHECK(derive_run_seed(1, Scenario::S1, 0) != derive_run_seed(1, Scenario::S2, 0));
    CHECK(derive_run_seed(1, Scenario::S1, 0) != derive_run_seed(2, Scenario::S1, 0));
    CHECK(derive_noise_seed(5) != 5);
}

TEST_CASE("estimator names")
{
    for (auto k : {EstimatorKind::SS, EstimatorKind::SSR, EstimatorKind::SSRWeighted,
                   EstimatorKind::Atom})
        CHECK(parse_estimator(to_string(k)) == k);
    CHECK(parse_estimator_list("ss,ssr,ss").size() == 2);
    CHECK_THROWS_AS(parse_estimator("pem"), std::invalid_argument);
    CHECK_THROWS_AS(parse_estimator_list(""), std::invalid_argument);
}

TEST_CASE("box statistics")
{
    const BoxStats b = box_stats({3.0, 1.0, 2.0});
    CHECK(b.median == 2.0);
    CHECK(b.q1 == 1.5);
    CHECK(b.q3 == 2.5);
    CHECK(b.n == 3);

    const BoxStats one = box_stats({4.2});
    CHECK(one.median == 4.2);
    CHECK(one.outliers.empty());

    const BoxStats c = box_stats(std::vector<double>(7, 5.0));
    CHECK(c.median == 5.0);
    CHECK(c.lo_whisker == 5.0);
    CHECK(c.hi_whisker == 5.0);

    const BoxStats o = box_stats({1, 2, 3, 4, 5, 6, 7, 8, 100});
    CHECK(o.outliers == std::vector<double>{100});
    CHECK(o.hi_whisker == 8.0);
    CHECK(o.lo_whisker == 1.0);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(50.0, 10.0);
    std::vector<double> v(200);
    for (double& x : v)
        x = n(rng);
    CHECK(std::abs(box_stats(v).median - 50.0) <= 1.0 * 10.0 * 0.3);
}

TEST_CASE("aggregate is order independent")
{
    std::vector<RunReport> reports;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> f(40.0, 100.0);
    for (int r = 0; r < 15; ++r)
    {
        RunReport rep;
        rep.run = r;
        for (auto k : {EstimatorKind::SS, EstimatorKind::SSR})
        {
            EstimatorOutcome o;
            o.kind = k;
            o.ok   = !(r == 3 && k == EstimatorKind::SSR);
            o.fit  = f(rng);
            rep.outcomes.push_back(o);
        }
        reports.push_back(rep);
    }
    const auto a = aggregate(reports);
    std::shuffle(reports.begin(), reports.end(), rng);
    const auto b = aggregate(reports);
    for (auto k : {EstimatorKind::SS, EstimatorKind::SSR})
    {
        CHECK(a.at(k).median == b.at(k).median);
        CHECK(a.at(k).q1 == b.at(k).q1);
        CHECK(a.at(k).q3 == b.at(k).q3);
        CHECK(std::isfinite(a.at(k).hi_whisker));
    }
    CHECK(a.at(EstimatorKind::SSR).failures == 1);
    CHECK(a.at(EstimatorKind::SSR).n == 14);
    CHECK(failure_ratio(reports) == doctest::Approx(1.0 / 15.0));
    CHECK_THROWS_AS(aggregate({}), std::invalid_argument);
}

TEST_CASE("run_study")
{
    StudyConfig cfg;
    cfg.scenario      = ScenarioConfig::defaults(Scenario::S2);
    cfg.scenario.runs = 1;
    cfg.estimators    = {EstimatorKind::SS};
    const auto one    = run_study(cfg);
    REQUIRE(one.size() == 1);
    CHECK(one[0].outcomes.size() == 1);
    CHECK(one[0].outcomes[0].ok);
    CHECK(one[0].outcomes[0].fit <= 100.0);

    cfg.scenario.runs = 3;
    cfg.estimators    = {EstimatorKind::SS, EstimatorKind::SSR};
    const auto a      = run_study(cfg);
    cfg.workers       = 3;
    const auto b      = run_study(cfg);
    REQUIRE(a.size() == 3);
    for (std::size_t r = 0; r < 3; ++r)
    {
        CHECK(a[r].run == int(r));
        CHECK(a[r].seed == b[r].seed);
        CHECK(a[r].outcomes[1].iterations.value_or(0) >= 1);
        for (std::size_t k = 0; k < 2; ++k)
        {
            CHECK(a[r].outcomes[k].fit == b[r].outcomes[k].fit);
            CHECK(a[r].outcomes[k].fit <= 100.0);
        }
    }
    std::ostringstream sa, sb;
    write_study_csv(sa, a, false);
    write_study_csv(sb, b, false);
    CHECK(sa.str() == sb.str());
}

TEST_CASE("dataset CSV round trip")
{
    std::mt19937_64 rng(3);
    const Datasetd d(oracle::random_matrix(rng, 7, 2), oracle::random_matrix(rng, 7, 3));
    std::stringstream ss;
    write_dataset_csv(ss, d);
    CHECK(ss.str().rfind("t,u1,u2,y1,y2,y3\n", 0) == 0);
    const Datasetd back = read_dataset_csv(ss);
    CHECK(back.inputs() == d.inputs());
    CHECK(back.outputs() == d.outputs());

    std::stringstream bad1("x,u1,y1\n1,2,3\n");
    CHECK_THROWS_AS(read_dataset_csv(bad1), IoError);
    std::stringstream bad2("t,u1,y1\n1,2\n");
    CHECK_THROWS_AS(read_dataset_csv(bad2), IoError);
    std::stringstream bad3("t,u1,y1\n2,1,1\n1,1,1\n");
    CHECK_THROWS_AS(read_dataset_csv(bad3), IoError);
    std::stringstream bad4("t,u1,y1\n1,a,1\n");
    CHECK_THROWS_AS(read_dataset_csv(bad4), IoError);
    CHECK_THROWS_AS(read_dataset_csv(fs::path("/nonexistent/x.csv")), IoError);
}

TEST_CASE("JSON files round trip")
{
    const fs::path dir      = scratch("json");
    const ScenarioDraw draw = scenario_s1(1, 100);
    write_system_json(dir / "sys.json", draw.system, 80);
    const SystemFile sf = read_system_json(dir / "sys.json");
    CHECK(sf.system.A == draw.system.A);
    CHECK(sf.system.C == draw.system.C);
    CHECK(sf.theta0.theta() == draw.system.impulse_response(80).theta());

    SsrState s;
    s.iteration = 2;
    s.lambda1   = 0.5;
    s.lambda2   = 3.0;
    s.nll       = -12.25;
    const ImpulseResponsed th(3, 1, 80, sf.theta0.theta() * 0.5);
    write_estimate_json(dir / "est.json", "ssr", th, {s}, VectorXd::Ones(3));
    const EstimateFile ef = read_estimate_json(dir / "est.json");
    CHECK(ef.estimator == "ssr");
    CHECK(ef.theta.theta() == th.theta());
    REQUIRE(ef.trace.size() == 1);
    CHECK(ef.trace[0].iteration == 2);
    CHECK(ef.trace[0].nll == -12.25);
    CHECK(ef.sigma == VectorXd::Ones(3));

    std::ofstream(dir / "broken.json") << "{\"A\": [[1]]";
    CHECK_THROWS_AS(read_system_json(dir / "broken.json"), IoError);
}

TEST_CASE("study CSV and summary")
{
    RunReport r;
    r.scenario = Scenario::S3;
    r.run      = 0;
    r.seed     = 42;
    EstimatorOutcome ok;
    ok.kind       = EstimatorKind::SSR;
    ok.ok         = true;
    ok.fit        = 91.5;
    ok.wall_ms    = 12.0;
    ok.iterations = 3;
    ok.lambda1    = 0.25;
    ok.lambda2    = 2.0;
    ok.nll        = 10.0;
    EstimatorOutcome bad;
    bad.kind = EstimatorKind::Atom;
    r.outcomes = {ok, bad};

    std::ostringstream os;
    write_study_csv(os, {r}, false);
    CHECK(os.str() ==
          "scenario,run,seed,estimator,fit,wall_ms,iters,lambda1,lambda2,nll\n"
          "s3,0,42,ssr,91.5,,3,0.25,2,10\n"
          "s3,0,42,atom,,,,,,\n");
    std::ostringstream timed;
    write_study_csv(timed, {r}, true);
    CHECK(timed.str().find(",12.000,") != std::string::npos);

    const fs::path dir = scratch("study");
    write_study_csv(dir / "study.csv", {r}, true);
    const auto back = read_study_csv(dir / "study.csv");
    REQUIRE(back.size() == 1);
    CHECK(back[0].seed == 42);
    CHECK(back[0].outcomes[0].fit == 91.5);
    CHECK(back[0].outcomes[0].lambda1.value() == 0.25);
    CHECK_FALSE(back[0].outcomes[1].ok);

    const auto summary = aggregate({r});
    const std::string js = summary_json(summary);
    CHECK(js.find("\"median\": 91.5") != std::string::npos);
    CHECK(js.find("\"median\": null") != std::string::npos);
    std::ostringstream table;
    print_median_table(table, Scenario::S3, summary);
    CHECK(table.str().find("91.50") != std::string::npos);
    CHECK(table.str().find("n/a") != std::string::npos);
}
