#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "json.hpp"

#include "ispw/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int status;
    std::string out;
    std::string err;
};

const std::string kTable1 = std::string(ISPW_TEST_DATA) + "/table1.csv";

fs::path scratch() {
    static const fs::path dir = [] {
        auto p = fs::temp_directory_path() / ("ispw_cli_" + std::to_string(::getpid()));
        fs::create_directories(p);
        return p;
    }();
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const std::string& env = "") {
    const auto err_path = scratch() / "stderr.txt";
    const std::string cmd = env + " '" + std::string(ISPW_CLI) + "' " + args + " 2>'" + err_path.string() + "'";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf{};
    while (std::size_t got = std::fread(buf.data(), 1, buf.size(), pipe)) out.append(buf.data(), got);
    const int raw = ::pclose(pipe);
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out, slurp(err_path)};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

double coefficient(const json& payload, const std::string& name) {
    for (const auto& c : payload.at("coefficients")) {
        if (c.at("name") == name) return c.at("estimate").get<double>();
    }
    FAIL("missing coefficient " << name);
    return 0.0;
}

}  // namespace

TEST_CASE("tian on the table1 data") {
    const auto r = run_cli("tian --input '" + kTable1 + "' --tau 100");
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    CHECK(j.at("tool") == "ispw");
    CHECK(j.at("command") == "tian");
    CHECK(j.at("config").at("tau") == 100.0);
    const auto& p = j.at("payload");
    CHECK(coefficient(p, "intercept") == doctest::Approx(6.520).epsilon(0.001));
    CHECK(coefficient(p, "treatment") == doctest::Approx(0.372).epsilon(0.003));
    CHECK(coefficient(p, "age") == doctest::Approx(-0.0418).epsilon(0.003));
    CHECK(coefficient(p, "sex") == doctest::Approx(0.374).epsilon(0.003));
}

TEST_CASE("km output") {
    const auto r = run_cli("km --input '" + kTable1 + "' --tau 100");
    REQUIRE(r.status == 0);
    const auto p = json::parse(r.out).at("payload");
    CHECK(p.at("records").size() == 12);
    CHECK_FALSE(p.at("degenerate_weights").get<bool>());
    CHECK(p.at("n_events") == 6);
}

TEST_CASE("lasso and cv-lasso") {
    auto r = run_cli("lasso --input '" + kTable1 + "' --tau 100 --lambda 0.1");
    REQUIRE(r.status == 0);
    auto p = json::parse(r.out).at("payload");
    CHECK(coefficient(p, "intercept") == doctest::Approx(4.906).epsilon(0.001));
    CHECK(coefficient(p, "treatment") == 0.0);
    CHECK(coefficient(p, "sex") == doctest::Approx(0.707).epsilon(0.002));

    r = run_cli("cv-lasso --input '" + kTable1 + "' --tau 100 --cv-folds 3");
    REQUIRE(r.status == 0);
    p = json::parse(r.out).at("payload");
    CHECK(p.contains("chosen_lambda"));
    CHECK(p.at("fold_of").size() == 12);
}

TEST_CASE("aic-search selects lognormal intercept+age+sex among lognormal fits") {
    const auto r = run_cli("aic-search --input '" + kTable1 + "' --tau 100 --distributions lognormal");
    REQUIRE(r.status == 0);
    const auto p = json::parse(r.out).at("payload");
    CHECK(p.at("fits").size() == 8);
    const auto& best = p.at("fits").at(p.at("best").get<std::size_t>());
    CHECK(best.at("aic").get<double>() == doctest::Approx(80.61).epsilon(0.001));
    CHECK(best.at("subset") == json::array({"intercept", "age", "sex"}));
}

TEST_CASE("explicit subsets") {
    const auto r = run_cli("aic-search --input '" + kTable1 + "' --tau 100 --distributions weibull --subsets 'intercept+sex;intercept'");
    REQUIRE(r.status == 0);
    const auto p = json::parse(r.out).at("payload");
    CHECK(p.at("fits").size() == 2);
    CHECK(p.at("fits").at(p.at("best").get<std::size_t>()).at("aic").get<double>() == doctest::Approx(95.97).epsilon(0.001));
}

TEST_CASE("input errors exit with 2 and a JSON error on stderr") {
    auto r = run_cli("tian --input /nonexistent/file.csv --tau 100");
    CHECK(r.status == 2);
    auto e = json::parse(r.err);
    CHECK(e.contains("error"));
    CHECK(r.out.empty());

    r = run_cli("tian --input '" + kTable1 + "' --tau 100 --bogus");
    CHECK(r.status == 2);

    r = run_cli("tian --input '" + kTable1 + "'");
    CHECK(r.status == 2);

    const auto bad = scratch() / "bad.csv";
    write_file(bad, "time,status,x\n1,1,2\n2,1,abc\n");
    r = run_cli("tian --input '" + bad.string() + "' --tau 5");
    CHECK(r.status == 2);
    CHECK(json::parse(r.err).at("error").at("code") == "NonNumericCell");
    CHECK(r.err.find("row 3, column 3") != std::string::npos);

    const auto status = scratch() / "status.csv";
    write_file(status, "time,status,x\n1,2,2\n2,1,3\n");
    CHECK(run_cli("tian --input '" + status.string() + "' --tau 5").status == 2);

    CHECK(run_cli("simulate --scenario 9 --reps 1").status == 2);
}

TEST_CASE("numerical failures exit with 3") {
    const auto cens = scratch() / "censored.csv";
    write_file(cens, "time,status,x\n1,0,2\n2,0,3\n3,0,1\n4,0,5\n");
    const auto r = run_cli("lasso --input '" + cens.string() + "' --tau 10 --lambda 0.1");
    CHECK(r.status == 3);
    CHECK(json::parse(r.err).contains("error"));
}

TEST_CASE("simulate output is reproducible across runs and worker counts") {
    const std::string args = "simulate --scenario 1,4 --n 100 --reps 20 --seed 7 --study selection --methods lasso,likelihood";
    const auto a = run_cli(args + " --workers 1");
    const auto b = run_cli(args + " --workers 1");
    const auto c = run_cli(args + " --workers 4");
    REQUIRE(a.status == 0);
    CHECK(a.out == b.out);
    CHECK(a.out == c.out);
    const auto csv1 = run_cli(args + " --workers 1 --format csv");
    const auto csv4 = run_cli(args + " --workers 3 --format csv");
    CHECK(csv1.out == csv4.out);
    CHECK(run_cli("simulate --scenario 1 --n 100 --reps 20 --seed 8 --methods lasso").out !=
          run_cli("simulate --scenario 1 --n 100 --reps 20 --seed 7 --methods lasso").out);
}

TEST_CASE("report JSON round trip") {
    const auto r = run_cli("aic-search --input '" + kTable1 + "' --tau 100");
    REQUIRE(r.status == 0);
    const auto j = json::parse(r.out);
    const auto report = ispw::report_from_json(j);
    CHECK(report.command == ispw::Command::AicSearch);
    CHECK(ispw::to_json(report) == j);
}

TEST_CASE("csv and json agree to six significant digits") {
    const auto j = json::parse(run_cli("tian --input '" + kTable1 + "' --tau 100").out);
    const auto csv = run_cli("tian --input '" + kTable1 + "' --tau 100 --format csv").out;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "name,estimate,selected");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto a = line.find(',');
        const auto b = line.find(',', a + 1);
        const double v = std::stod(line.substr(a + 1, b - a - 1));
        const double ref = coefficient(j.at("payload"), line.substr(0, a));
        CHECK(v == doctest::Approx(ref).epsilon(1e-5));
        ++rows;
    }
    CHECK(rows == 4);
}

TEST_CASE("output directory and --out") {
    const auto dir = scratch() / "outdir";
    fs::create_directories(dir);
    auto r = run_cli("tian --input '" + kTable1 + "' --tau 100", "ISPW_OUTPUT_DIR='" + dir.string() + "'");
    CHECK(r.status == 0);
    CHECK(r.out.empty());
    CHECK(fs::exists(dir / "tian.json"));
    CHECK(json::parse(slurp(dir / "tian.json")).at("command") == "tian");

    const auto file = scratch() / "explicit.csv";
    r = run_cli("km --input '" + kTable1 + "' --tau 100 --format csv --out '" + file.string() + "'");
    CHECK(r.status == 0);
    CHECK(fs::file_size(file) > 0);
}

TEST_CASE("version") {
    const auto r = run_cli("--version");
    CHECK(r.status == 0);
    CHECK(r.out.find(ispw::kToolVersion) != std::string::npos);
}
