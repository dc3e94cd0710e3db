#include "hankel_ssr/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace hankel_ssr
{

using nlohmann::json;

namespace
{

std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream os(path);
    if (!os)
        throw IoError("cannot write " + path.string());
    os << std::setprecision(17);
    return os;
}

std::ifstream open_in(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw IoError("cannot read " + path.string());
    return is;
}

std::vector<std::string> split(const std::string& line, char sep = ',')
{
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(line);
    while (std::getline(ss, item, sep))
        out.push_back(item);
    if (!line.empty() && line.back() == sep)
        out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& what)
{
    try
    {
        std::size_t used = 0;
        const double v   = std::stod(s, &used);
        if (used != s.size())
            throw std::invalid_argument(s);
        return v;
    }
    catch (const std::exception&)
    {
        throw IoError("malformed number '" + s + "' in " + what);
    }
}

json matrix_rows(const Eigen::MatrixXd& M)
{
    json rows = json::array();
    for (Index i = 0; i < M.rows(); ++i)
    {
        json row = json::array();
        for (Index j = 0; j < M.cols(); ++j)
            row.push_back(M(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_rows(const json& rows)
{
    const auto n = static_cast<Index>(rows.size());
    const Index m = n > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXd M(n, m);
    for (Index i = 0; i < n; ++i)
    {
        if (static_cast<Index>(rows.at(i).size()) != m)
            throw IoError("ragged matrix in JSON");
        for (Index j = 0; j < m; ++j)
            M(i, j) = rows.at(i).at(j).get<double>();
    }
    return M;
}

json vector_json(const Eigen::VectorXd& v)
{
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j)
{
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(),
                                             static_cast<Index>(values.size()));
}

std::string read_all(const std::filesystem::path& path)
{
    auto is = open_in(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace

//-----------------------------------------------------------------------------
// Dataset CSV
//-----------------------------------------------------------------------------

void write_dataset_csv(std::ostream& os, const Datasetd& d)
{
    const auto old = os.precision(17);
    os << "t";
    for (Index j = 0; j < d.input_count(); ++j)
        os << ",u" << j + 1;
    for (Index i = 0; i < d.output_count(); ++i)
        os << ",y" << i + 1;
    os << '\n';
    for (Index t = 0; t < d.samples(); ++t)
    {
        os << t + 1;
        for (Index j = 0; j < d.input_count(); ++j)
            os << ',' << d.inputs()(t, j);
        for (Index i = 0; i < d.output_count(); ++i)
            os << ',' << d.outputs()(t, i);
        os << '\n';
    }
    os.precision(old);
}

void write_dataset_csv(const std::filesystem::path& path, const Datasetd& d)
{
    auto os = open_out(path);
    write_dataset_csv(os, d);
    if (!os)
        throw IoError("failed writing " + path.string());
}

Datasetd read_dataset_csv(std::istream& is)
{
    std::string line;
    if (!std::getline(is, line))
        throw IoError("dataset CSV: missing header");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    const auto header = split(line);
    if (header.empty() || header[0] != "t")
        throw IoError("dataset CSV: header must start with 't'");
    Index m = 0, p = 0;
    for (std::size_t k = 1; k < header.size(); ++k)
    {
        const std::string& h = header[k];
        if (p == 0 && h == "u" + std::to_string(m + 1))
            ++m;
        else if (h == "y" + std::to_string(p + 1))
            ++p;
        else
            throw IoError("dataset CSV: unexpected column '" + h + "'");
    }
    if (m == 0 || p == 0)
        throw IoError("dataset CSV: need at least one input and one output");

    std::vector<std::vector<double>> rows;
    while (std::getline(is, line))
    {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        const auto cells = split(line);
        if (static_cast<Index>(cells.size()) != 1 + m + p)
            throw IoError("dataset CSV: wrong number of columns on row " +
                          std::to_string(rows.size() + 1));
        std::vector<double> row;
        for (const auto& c : cells)
            row.push_back(parse_double(c, "dataset CSV"));
        if (!rows.empty() && !(row[0] > rows.back()[0]))
            throw IoError("dataset CSV: time column must be ascending");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw IoError("dataset CSV: no samples");

    const auto N = static_cast<Index>(rows.size());
    Eigen::MatrixXd u(N, m), y(N, p);
    for (Index t = 0; t < N; ++t)
    {
        const auto& r = rows[static_cast<std::size_t>(t)];
        for (Index j = 0; j < m; ++j)
            u(t, j) = r[static_cast<std::size_t>(1 + j)];
        for (Index i = 0; i < p; ++i)
            y(t, i) = r[static_cast<std::size_t>(1 + m + i)];
    }
    return Datasetd(std::move(u), std::move(y));
}

Datasetd read_dataset_csv(const std::filesystem::path& path)
{
    auto is = open_in(path);
    return read_dataset_csv(is);
}

//-----------------------------------------------------------------------------
// System JSON
//-----------------------------------------------------------------------------

void write_system_json(const std::filesystem::path& path,
                       const TrueSystem& sys, Index length)
{
    json j;
    j["A"]      = matrix_rows(sys.A);
    j["B"]      = matrix_rows(sys.B);
    j["C"]      = matrix_rows(sys.C);
    j["T"]      = length;
    j["theta0"] = vector_json(sys.impulse_response(length).theta());
    auto os     = open_out(path);
    os << j.dump(2) << '\n';
}

SystemFile read_system_json(const std::filesystem::path& path)
{
    try
    {
        const json j = json::parse(read_all(path));
        SystemFile f;
        f.system.A = matrix_from_rows(j.at("A"));
        f.system.B = matrix_from_rows(j.at("B"));
        f.system.C = matrix_from_rows(j.at("C"));
        const Eigen::VectorXd theta0 = vector_from_json(j.at("theta0"));
        const Index pm = f.system.outputs() * f.system.inputs();
        if (pm == 0 || theta0.size() % pm != 0)
            throw IoError("system JSON: theta0 length does not match B, C");
        f.theta0 = ImpulseResponsed(f.system.outputs(), f.system.inputs(),
                                    theta0.size() / pm, theta0);
        return f;
    }
    catch (const json::exception& e)
    {
        throw IoError("system JSON " + path.string() + ": " + e.what());
    }
}

//-----------------------------------------------------------------------------
// Estimate JSON
//-----------------------------------------------------------------------------

std::string estimate_json(const std::string& estimator,
                          const ImpulseResponsed& theta,
                          const std::vector<SsrState>& trace,
                          const Eigen::VectorXd& sigma)
{
    json j;
    j["estimator"] = estimator;
    j["p"]         = theta.outputs();
    j["m"]         = theta.inputs();
    j["T"]         = theta.length();
    j["theta"]     = vector_json(theta.theta());
    json tr        = json::array();
    for (const SsrState& s : trace)
        tr.push_back({{"k", s.iteration},
                      {"lambda1", s.lambda1},
                      {"lambda2", s.lambda2},
                      {"nll", s.nll}});
    j["trace"] = std::move(tr);
    j["sigma"] = vector_json(sigma);
    return j.dump(2);
}

void write_estimate_json(const std::filesystem::path& path,
                         const std::string& estimator,
                         const ImpulseResponsed& theta,
                         const std::vector<SsrState>& trace,
                         const Eigen::VectorXd& sigma)
{
    auto os = open_out(path);
    os << estimate_json(estimator, theta, trace, sigma) << '\n';
}

EstimateFile read_estimate_json(const std::filesystem::path& path)
{
    try
    {
        const json j = json::parse(read_all(path));
        EstimateFile f;
        f.estimator = j.value("estimator", "");
        f.theta     = ImpulseResponsed(j.at("p").get<Index>(),
                                       j.at("m").get<Index>(),
                                       j.at("T").get<Index>(),
                                       vector_from_json(j.at("theta")));
        for (const json& s : j.at("trace"))
        {
            SsrState st;
            st.iteration = s.at("k").get<int>();
            st.lambda1   = s.at("lambda1").get<double>();
            st.lambda2   = s.at("lambda2").get<double>();
            st.nll       = s.at("nll").get<double>();
            f.trace.push_back(std::move(st));
        }
        f.sigma = vector_from_json(j.at("sigma"));
        return f;
    }
    catch (const json::exception& e)
    {
        throw IoError("estimate JSON " + path.string() + ": " + e.what());
    }
}

//-----------------------------------------------------------------------------
// Study CSV and summary
//-----------------------------------------------------------------------------

void write_study_csv(std::ostream& os, const std::vector<RunReport>& reports,
                     bool record_timing)
{
    const auto old = os.precision(17);
    os << "scenario,run,seed,estimator,fit,wall_ms,iters,lambda1,lambda2,nll\n";
    for (const RunReport& r : reports)
        for (const EstimatorOutcome& o : r.outcomes)
        {
            os << to_string(r.scenario) << ',' << r.run << ',' << r.seed << ','
               << to_string(o.kind) << ',';
            if (o.ok)
                os << o.fit;
            os << ',';
            if (record_timing)
                os << std::fixed << std::setprecision(3) << o.wall_ms
                   << std::defaultfloat << std::setprecision(17);
            os << ',';
            if (o.iterations)
                os << *o.iterations;
            os << ',';
            if (o.lambda1)
                os << *o.lambda1;
            os << ',';
            if (o.lambda2)
                os << *o.lambda2;
            os << ',';
            if (o.nll)
                os << *o.nll;
            os << '\n';
        }
    os.precision(old);
}

void write_study_csv(const std::filesystem::path& path,
                     const std::vector<RunReport>& reports, bool record_timing)
{
    auto os = open_out(path);
    write_study_csv(os, reports, record_timing);
    if (!os)
        throw IoError("failed writing " + path.string());
}

std::vector<RunReport> read_study_csv(const std::filesystem::path& path)
{
    auto is = open_in(path);
    std::string line;
    if (!std::getline(is, line) ||
        line.rfind("scenario,run,seed,estimator,fit", 0) != 0)
        throw IoError("study CSV: unexpected header in " + path.string());
    std::vector<RunReport> reports;
    while (std::getline(is, line))
    {
        if (line.empty())
            continue;
        const auto c = split(line);
        if (c.size() != 10)
            throw IoError("study CSV: expected 10 columns");
        const Scenario sc = parse_scenario(c[0]);
        const int run     = std::stoi(c[1]);
        if (reports.empty() || reports.back().run != run ||
            reports.back().scenario != sc)
        {
            RunReport r;
            r.scenario = sc;
            r.run      = run;
            r.seed     = std::stoull(c[2]);
            reports.push_back(std::move(r));
        }
        EstimatorOutcome o;
        o.kind = parse_estimator(c[3]);
        o.ok   = !c[4].empty();
        if (o.ok)
            o.fit = parse_double(c[4], "study CSV");
        if (!c[6].empty())
            o.iterations = std::stoi(c[6]);
        if (!c[7].empty())
            o.lambda1 = parse_double(c[7], "study CSV");
        if (!c[8].empty())
            o.lambda2 = parse_double(c[8], "study CSV");
        if (!c[9].empty())
            o.nll = parse_double(c[9], "study CSV");
        reports.back().outcomes.push_back(std::move(o));
    }
    return reports;
}

std::string summary_json(const std::map<EstimatorKind, BoxStats>& summary)
{
    json j = json::object();
    for (const auto& [kind, b] : summary)
    {
        json e;
        if (b.n > 0)
        {
            e["median"]     = b.median;
            e["q1"]         = b.q1;
            e["q3"]         = b.q3;
            e["lo_whisker"] = b.lo_whisker;
            e["hi_whisker"] = b.hi_whisker;
        }
        else
        {
            for (const char* key :
                 {"median", "q1", "q3", "lo_whisker", "hi_whisker"})
                e[key] = nullptr;
        }
        e["outliers"] = b.outliers;
        e["n"]        = b.n;
        e["failures"] = b.failures;
        j[to_string(kind)] = std::move(e);
    }
    return j.dump(2);
}

void write_summary_json(const std::filesystem::path& path,
                        const std::map<EstimatorKind, BoxStats>& summary)
{
    auto os = open_out(path);
    os << summary_json(summary) << '\n';
}

void print_median_table(std::ostream& os, Scenario scenario,
                        const std::map<EstimatorKind, BoxStats>& summary)
{
    const auto flags = os.flags();
    const auto prec  = os.precision();
    os << std::left << std::setw(10) << "scenario";
    for (const auto& [kind, b] : summary)
        os << std::right << std::setw(14) << to_string(kind);
    os << '\n' << std::left << std::setw(10) << to_string(scenario);
    os << std::fixed << std::setprecision(2);
    for (const auto& [kind, b] : summary)
    {
        if (b.n > 0)
            os << std::right << std::setw(14) << b.median;
        else
            os << std::right << std::setw(14) << "n/a";
    }
    os << '\n';
    os.flags(flags);
    os.precision(prec);
}

} // namespace hankel_ssr
