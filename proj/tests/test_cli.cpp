#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynbp/cli.hpp"

namespace {

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"dynbp"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dynbp::run_cli(static_cast<int>(argv.size()), argv.data());
}

void put(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  REQUIRE(out);
  out << text;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool exists(const std::string& path) {
  std::ifstream in(path);
  return static_cast<bool>(in);
}

const char* kStaticDoc =
    R"({"variables":[{"id":0,"cardinality":2},{"id":1,"cardinality":2}],)"
    R"("factors":[{"id":0,"scope":[0,1],"table":[1,1,1,1]}]})";

const char* kTemporalDoc =
    R"({"variables":[{"id":0,"cardinality":2}],)"
    R"("temporal_factors":[{"id":0,"past_scope":[0],"future_scope":[0],)"
    R"("table":[0.9,0.1,0.1,0.9]}]})";

struct Cleanup {
  std::vector<std::string> paths;
  ~Cleanup() {
    for (const auto& p : paths) std::remove(p.c_str());
  }
};

}  // namespace

TEST_CASE("validate accepts a well-formed temporal model") {
  Cleanup c{{"cli_t.json", "cli_vm.json"}};
  put("cli_t.json", kTemporalDoc);
  CHECK(run({"validate", "--model", "cli_t.json", "--manifest", "cli_vm.json"}) == 0);
  const auto manifest = nlohmann::json::parse(slurp("cli_vm.json"));
  CHECK(manifest.at("tool") == "dynbp");
  CHECK(manifest.at("subcommand") == "validate");
  CHECK(manifest.contains("config"));
  CHECK(manifest.contains("results"));
}

TEST_CASE("exhaustive inference reports the partition function") {
  Cleanup c{{"cli_s.json", "cli_em.json", "cli_eo.json"}};
  put("cli_s.json", kStaticDoc);
  CHECK(run({"exact", "--model", "cli_s.json", "--var", "0", "--map", "--out",
             "cli_eo.json", "--manifest", "cli_em.json"}) == 0);
  const auto out = nlohmann::json::parse(slurp("cli_eo.json"));
  CHECK(out.at("log_z").get<double>() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(out.at("marginals").at("0")[0].get<double>() == doctest::Approx(0.5));
  CHECK(out.at("map_state")[0].get<int>() == 0);
}

TEST_CASE("sum-product writes a marginal table") {
  Cleanup c{{"cli_s2.json", "cli_bp.csv", "cli_bp.csv.manifest.json"}};
  put("cli_s2.json", kStaticDoc);
  CHECK(run({"bp", "--model", "cli_s2.json", "--out", "cli_bp.csv"}) == 0);
  const std::string csv = slurp("cli_bp.csv");
  CHECK(csv.rfind("variable,state,belief\n", 0) == 0);
  CHECK(csv.find("0,0,0.5") != std::string::npos);
  CHECK(exists("cli_bp.csv.manifest.json"));
}

TEST_CASE("temporal evolution writes trajectory and diagnostics") {
  Cleanup c{{"cli_t2.json", "cli_dy.csv", "cli_dy.diag.csv",
             "cli_dy.csv.manifest.json"}};
  put("cli_t2.json", kTemporalDoc);
  CHECK(run({"dynbp", "--model", "cli_t2.json", "--steps", "2", "--init", "0",
             "--out", "cli_dy.csv"}) == 0);
  const std::string csv = slurp("cli_dy.csv");
  CHECK(csv.rfind("step,node,state,belief\n", 0) == 0);
  const size_t row = csv.find("\n1,0,0,");
  REQUIRE(row != std::string::npos);
  CHECK(std::stod(csv.substr(row + 7)) == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(exists("cli_dy.diag.csv"));
  const std::string diag = slurp("cli_dy.diag.csv");
  CHECK(diag.rfind("step,sweep,max_delta,prior_residual,cross_residual,objective\n", 0) ==
        0);
}

TEST_CASE("mixed static and temporal documents are rejected") {
  Cleanup c{{"cli_mix.json", "cli_mm.json"}};
  put("cli_mix.json",
      R"({"variables":[{"id":0,"cardinality":2}],)"
      R"("factors":[{"id":0,"scope":[0],"table":[1,1]}],)"
      R"("temporal_factors":[{"id":0,"past_scope":[0],"future_scope":[0],)"
      R"("table":[1,1,1,1]}]})");
  CHECK(run({"validate", "--model", "cli_mix.json", "--manifest", "cli_mm.json"}) == 1);
}

TEST_CASE("bad invocations exit with the usage code") {
  CHECK(run({"validate", "--model", "x.json", "--nope"}) == 64);
  CHECK(run({}) == 64);
  CHECK(run({"no-such-command"}) == 64);
}

TEST_CASE("missing input files exit with the failure code") {
  Cleanup c{{"cli_missing_m.json"}};
  CHECK(run({"validate", "--model", "definitely_not_here.json", "--manifest",
             "cli_missing_m.json"}) == 1);
}
