#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qsdctl/cli.hpp"

namespace fs = std::filesystem;
using qsdctl::cli::run;

namespace {

const std::string models = std::string(QSDCTL_SOURCE_DIR) + "/models/";

struct Scratch {
  fs::path dir;
  Scratch() {
    std::random_device rd;
    dir = fs::temp_directory_path() / ("qsdctl-cli-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string sub(const std::string& name) const { return (dir / name).string(); }
};

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out;
  std::ostringstream err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

nlohmann::json read_json(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

void check_headers_have_units(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    const auto rows = read_csv(entry.path());
    REQUIRE_FALSE(rows.empty());
    for (const auto& name : rows.front()) {
      INFO(entry.path().filename().string(), ": ", name);
      CHECK(name.find(" (") != std::string::npos);
    }
  }
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate writes a report and a manifest") {
  Scratch s;
  const auto r = call({"validate", models + "logistic.model", "--out", s.sub("v")});
  CHECK(r.code == 0);
  const auto report = read_json(s.dir / "v" / "report.json");
  CHECK(report["all_pass"] == true);
  const auto manifest = read_json(s.dir / "v" / "manifest.json");
  CHECK(manifest["command"] == "validate");
  CHECK(manifest["exit_code"] == 0);
  CHECK(manifest["model"]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest["outputs"] == nlohmann::json::array({"report.json"}));
}

TEST_CASE("failing hypotheses are advisory") {
  Scratch s;
  const auto r = call({"validate", "--model", models + "pure_death.model", "--out", s.sub("v")});
  CHECK(r.code == 0);
  CHECK(r.err.find("H2(i)") != std::string::npos);
}

TEST_CASE("solve max mode on pure death") {
  Scratch s;
  const auto r = call({"solve", "--beta", "0.99", "--mode", "max", models + "pure_death.model", "--out", s.sub("s")});
  REQUIRE(r.code == 0);
  const auto rows = read_csv(s.dir / "s" / "value.csv");
  REQUIRE(rows.size() == 202);
  CHECK(rows[2][0] == "1");
  CHECK(std::abs(std::stod(rows[2][1]) - 100.0) < 1e-10);
  check_headers_have_units(s.dir / "s");
}

TEST_CASE("solve above lambda-star is a diagnostic") {
  Scratch s;
  const auto r = call({"solve", "--beta", "1.5", "--mode", "min", models + "pure_death.model", "--out", s.sub("s")});
  CHECK(r.code == 2);
  CHECK(r.err.find("beta exceeds truncated lambda-star") != std::string::npos);
  CHECK(read_json(s.dir / "s" / "manifest.json")["exit_code"] == 2);
}

TEST_CASE("usage and input errors exit with 1") {
  Scratch s;
  CHECK(call({}).code == 1);
  CHECK(call({"frobnicate"}).code == 1);
  CHECK(call({"qsd", models + "nope.model", "--out", s.sub("q")}).code == 1);
  CHECK(call({"solve", models + "t2.model", "--out", s.sub("q")}).code == 1);
  CHECK(call({"qsd", models + "t2.model", "--action", "a9", "--out", s.sub("q")}).code == 1);
}

TEST_CASE("qsd outputs and diagnostics") {
  Scratch s;
  const auto r = call({"qsd", models + "t2.model", "--action", "a2", "--diagnose", "--out", s.sub("q")});
  REQUIRE(r.code == 0);
  const auto summary = read_json(s.dir / "q" / "qsd.json");
  CHECK(std::abs(summary["lambda"].get<double>() - 0.92902488873415456) < 1e-12);
  const auto conv = read_csv(s.dir / "q" / "convergence.csv");
  CHECK(conv.size() == 5);
  CHECK(read_csv(s.dir / "q" / "qsd.csv").size() == 7);
  check_headers_have_units(s.dir / "q");

  const auto sweep = call({"qsd", models + "logistic.model", "--levels", "50,100", "--out", s.sub("t")});
  REQUIRE(sweep.code == 0);
  CHECK(read_csv(s.dir / "t" / "truncation.csv").size() == 3);
}

TEST_CASE("oracle and rate optimum on T2") {
  Scratch s;
  REQUIRE(call({"oracle", models + "t2.model", "--beta", "0", "--mode", "min", "--out", s.sub("o")}).code == 0);
  const auto table = read_csv(s.dir / "o" / "oracle.csv");
  CHECK(table.size() == 65);
  CHECK(read_json(s.dir / "o" / "oracle.json")["optimizer_id"] == 63);
  check_headers_have_units(s.dir / "o");

  REQUIRE(call({"rate-opt", models + "t2.model", "--mode", "inf", "--out", s.sub("r")}).code == 0);
  const auto rate = read_json(s.dir / "r" / "rate.json");
  CHECK(std::abs(rate["lambda_star"].get<double>() - 0.47460806500764718) < 1e-8);

  CHECK(call({"oracle", models + "t2.model", "--beta", "0.6", "--mode", "max", "--out", s.sub("u")}).code == 2);
}

TEST_CASE("limit subcommand") {
  Scratch s;
  REQUIRE(call({"limit", models + "t2.model", "--mode", "min", "--k-max", "4", "--out", s.sub("l")}).code == 0);
  CHECK(read_csv(s.dir / "l" / "limit.csv").size() == 6);
  check_headers_have_units(s.dir / "l");
}

TEST_CASE("simulate without survivors is a diagnostic") {
  Scratch s;
  const auto r = call({"simulate", models + "pure_death.model", "--samples", "100", "--conditional", "60", "--out",
                       s.sub("m")});
  CHECK(r.code == 2);
}

TEST_CASE("manifest replay reproduces every output byte for byte") {
  Scratch s;
  const auto first = call({"simulate", models + "logistic.model", "--seed", "99", "--samples", "2000", "--state", "3",
                           "--times", "0.5,1,2", "--beta", "0.3", "--trajectories", "3", "--horizon", "2",
                           "--conditional", "1", "--out", s.sub("a")});
  REQUIRE(first.code == 0);
  const auto manifest = read_json(s.dir / "a" / "manifest.json");
  CHECK(manifest["seeds"] == nlohmann::json::array({99}));
  const auto again = call({"replay", (s.dir / "a" / "manifest.json").string(), "--out", s.sub("b")});
  REQUIRE(again.code == 0);
  const auto outputs = manifest["outputs"].get<std::vector<std::string>>();
  CHECK(outputs.size() == 4);
  for (const auto& name : outputs) CHECK_MESSAGE(slurp(s.dir / "a" / name) == slurp(s.dir / "b" / name), name);
  check_headers_have_units(s.dir / "a");
}

TEST_CASE("replay refuses a modified model file") {
  Scratch s;
  const fs::path model = s.dir / "copy.model";
  fs::copy_file(models + "pure_death.model", model);
  REQUIRE(call({"qsd", model.string(), "--out", s.sub("a")}).code == 0);
  std::ofstream(model, std::ios::app) << "\n# edited\n";
  const auto r = call({"replay", (s.dir / "a" / "manifest.json").string(), "--out", s.sub("b")});
  CHECK(r.code == 1);
  CHECK(r.err.find("changed") != std::string::npos);
}

}  // TEST_SUITE
