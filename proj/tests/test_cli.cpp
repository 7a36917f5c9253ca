#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mvpb/cli.hpp"
#include "mvpb/common.hpp"
#include "support.hpp"

using namespace mvpb;
namespace fs = std::filesystem;

namespace {

RunConfig small(const std::string& study, const std::string& out) {
  RunConfig c = RunConfig::parse("ns = 12\nna = 6\nsuite_vectors = 50\n");
  c.set("study", study);
  c.study = study;
  c.out_dir = out;
  c.seed = 42;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig c = RunConfig::parse("# comment\nns = 20   # trailing\n\nuse_gamma = false\nnsp_times = 1, 2.5\n");
  CHECK(c.get_int("ns") == 20);
  CHECK(c.get_int("na") == 16);
  CHECK_FALSE(c.get_bool("use_gamma"));
  CHECK(c.get_list("nsp_times") == std::vector<double>{1.0, 2.5});
  CHECK_THROWS_AS(RunConfig::parse("bogus = 1\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("ns 12\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("ns = 12\nns = 14\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("ns = 1000\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("ns = 12.5\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("use_gamma = yes\n"), ValidationError);
  CHECK_THROWS_AS(RunConfig::parse("study = everything\n"), ValidationError);
}

TEST_CASE("shipped key list matches the schema") {
  CHECK(slurp(std::string(MVPB_SOURCE_DIR) + "/docs/config_keys.txt") == config_schema_text());
}

TEST_CASE("digests") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("malformed key exits 2 without numerical work") {
  const std::string dir = "cli_bad";
  fs::remove_all(dir);
  {
    std::ofstream("cli_bad.cfg") << "kernel_bogus = 3\n";
  }
  const char* argv[] = {"mvpb", "coeffs", "--config", "cli_bad.cfg", "--out", dir.c_str()};
  CHECK(cli_main(6, const_cast<char**>(argv)) == 2);
  const Json m = Json::parse(slurp(dir + "/manifest_coeffs.json"));
  CHECK(m["exit_code"] == 2);
  CHECK(m["files"].empty());
  CHECK_FALSE(fs::exists(dir + "/coeffs.csv"));
}

TEST_CASE("coeffs study and determinism") {
  Json a, b;
  REQUIRE(run_study(small("coeffs", "cli_c1"), &a) == 0);
  REQUIRE(run_study(small("coeffs", "cli_c2"), &b) == 0);
  const Json& v = a["values"];
  CHECK(v["a"][2].get<double>() > 0.0);
  CHECK(v["kappa1"].get<double>() > 0.0);
  CHECK(v["a2_minus_kappa1"].get<double>() == 0.0);
  CHECK(a["files"] == b["files"]);
  CHECK(a["files"].size() == 2);
  for (const Json& f : a["files"]) CHECK(f["sha256"].get<std::string>().size() == 64);
}

TEST_CASE("coarse dispersion surfaces BranchSwap") {
  RunConfig c = small("dispersion", "cli_d");
  c.set("steps", "8");
  Json m;
  CHECK(run_study(c, &m) == 3);
  CHECK(m["error"]["kind"] == "BranchSwap");
  CHECK(fs::exists("cli_d/manifest_dispersion.json"));
}

TEST_CASE("report rows") {
  Json coeffs;
  REQUIRE(run_study(small("coeffs", "cli_r"), &coeffs) == 0);
  std::vector<CriterionRow> rows = report({coeffs});
  REQUIRE(rows.size() == 11);
  for (int id : {1, 2, 3, 4, 5}) CHECK(rows[id - 1].status == "MissingStudy");

  // A dispersion manifest agreeing with the coefficients passes row 2; a perturbed a1 fails it.
  Json disp;
  disp["study"] = "dispersion";
  disp["status"] = "ok";
  disp["values"]["a_fit"] = coeffs["values"]["a"];
  rows = report({coeffs, disp});
  CHECK(rows[1].status == "pass");
  Json bad = coeffs;
  bad["values"]["a"][2] = 1.5 * coeffs["values"]["a"][2].get<double>();
  rows = report({bad, disp});
  CHECK(rows[1].status == "fail");
  // Row 1 needs fields absent from the stub.
  CHECK(rows[0].status == "MissingStudy");

  RunConfig r = small("report", "cli_r");
  Json m;
  CHECK(run_study(r, &m) == 0);
  CHECK(fs::exists("cli_r/report.csv"));
}
