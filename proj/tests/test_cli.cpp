#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <doctest.h>
#include <json.hpp>

#include "hankel_ssr/io.hpp"

using namespace hankel_ssr;
namespace fs = std::filesystem;

namespace
{

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "hankel_ssr_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path)
{
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Run
{
    int code;
    std::string out;
};

Run cli(const std::string& args, const fs::path& dir)
{
    const fs::path log = dir / "stdout.txt";
    const std::string cmd = std::string(HANKEL_SSR_CLI) + " " + args + " > " +
                            log.string() + " 2> " + (dir / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

int count_lines(const std::string& s)
{
    return int(std::count(s.begin(), s.end(), '\n'));
}

} // namespace

TEST_CASE("simulate")
{
    const fs::path dir = scratch("simulate");
    const std::string args = "simulate --scenario s1 --n 500 --seed 7 --out " +
                             (dir / "a").string();
    REQUIRE(cli(args, dir).code == 0);
    const fs::path csv = dir / "a" / "s1_run000.csv";
    REQUIRE(fs::exists(csv));
    REQUIRE(fs::exists(dir / "a" / "s1_run000.system.json"));
    const std::string text = slurp(csv);
    CHECK(text.rfind("t,u1,y1,y2,y3\n", 0) == 0);
    CHECK(count_lines(text) == 501);

    REQUIRE(cli("simulate --scenario s1 --n 500 --seed 7 --out " +
                    (dir / "b").string(),
                dir)
                .code == 0);
    CHECK(slurp(dir / "b" / "s1_run000.csv") == text);
    CHECK(slurp(dir / "b" / "s1_run000.system.json") ==
          slurp(dir / "a" / "s1_run000.system.json"));

    REQUIRE(cli("simulate --scenario s2 --runs 3 --out " + (dir / "c").string(),
                dir)
                .code == 0);
    std::vector<std::string> systems;
    for (int r = 0; r < 3; ++r)
    {
        const fs::path sys = dir / "c" / ("s2_run00" + std::to_string(r) + ".system.json");
        REQUIRE(fs::exists(sys));
        systems.push_back(slurp(sys));
    }
    CHECK(systems[0] != systems[1]);
    CHECK(systems[1] != systems[2]);
    CHECK(systems[0] != systems[2]);
}

TEST_CASE("estimate")
{
    const fs::path dir = scratch("estimate");
    REQUIRE(cli("simulate --scenario s1 --seed 3 --out " + dir.string(), dir).code == 0);
    const fs::path csv = dir / "s1_run000.csv";

    const Run run = cli("estimate " + csv.string() + " --estimators ss,ssr", dir);
    REQUIRE(run.code == 0);

    const EstimateFile ss = read_estimate_json(dir / "s1_run000.ss.json");
    CHECK(ss.theta.theta().size() == 240);
    CHECK(ss.theta.length() == 80);

    const EstimateFile ssr = read_estimate_json(dir / "s1_run000.ssr.json");
    REQUIRE(ssr.trace.size() >= 1);
    for (std::size_t k = 1; k < ssr.trace.size(); ++k)
        CHECK(ssr.trace[k].nll < ssr.trace[k - 1].nll);

    const SystemFile truth = read_system_json(dir / "s1_run000.system.json");
    const std::regex line("ssr: .* fit (\\S+)");
    std::smatch m;
    REQUIRE(std::regex_search(run.out, m, line));
    const double printed = std::stod(m[1].str());
    const double offline = fit_metric(ssr.theta, truth.theta0).value;
    CHECK(std::abs(printed - offline) <= 1e-9 * std::abs(offline));

    CHECK(cli("estimate " + csv.string() + " --estimators atom", dir).code == 3);
    CHECK(slurp(dir / "stderr.txt").find("ATOM is SISO-only") != std::string::npos);
    CHECK(cli("estimate " + (dir / "missing.csv").string(), dir).code == 2);
}

TEST_CASE("exit codes")
{
    const fs::path dir = scratch("codes");
    std::ofstream(dir / "file") << "x";
    CHECK(cli("simulate --scenario s1 --out " + (dir / "file" / "sub").string(), dir)
              .code == 2);
    CHECK(cli("simulate --scenario s9", dir).code == 3);
    CHECK(cli("benchmark --scenario s1 --estimators atom --out " + dir.string(), dir)
              .code == 3);
    CHECK(cli("benchmark --scenario s1 --estimators pem --out " + dir.string(), dir)
              .code == 3);
    CHECK(cli("", dir).code == 3);
}

TEST_CASE("benchmark")
{
    const fs::path dir = scratch("benchmark");
    const std::string common =
        "benchmark --scenario s2 --runs 2 --n 300 --estimators ss,ssr --seed 1 --out ";
    const Run one = cli(common + (dir / "w1").string() + " --workers 1", dir);
    REQUIRE(one.code == 0);
    CHECK(one.out.find("ss") != std::string::npos);
    CHECK(one.out.find("ssr") != std::string::npos);
    const Run two = cli(common + (dir / "w2").string() + " --workers 2", dir);
    REQUIRE(two.code == 0);
    CHECK(slurp(dir / "w1" / "study.csv") == slurp(dir / "w2" / "study.csv"));
    CHECK(slurp(dir / "w1" / "summary.json") == slurp(dir / "w2" / "summary.json"));
    CHECK(one.out == two.out);

    const auto summary = nlohmann::json::parse(slurp(dir / "w1" / "summary.json"));
    CHECK(summary.contains("ss"));
    CHECK(summary.contains("ssr"));
    CHECK(summary["ssr"]["n"] == 2);

    const Run report = cli("report " + (dir / "w1" / "study.csv").string(), dir);
    CHECK(report.code == 0);
    CHECK(report.out.find("s2") != std::string::npos);
}
