// Runs every study at its default configuration and prints one line per
// acceptance criterion. Criteria listed in kKnownFailures are reported as
// FAIL but do not change the exit status; any other failure does.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mvpb/cli.hpp"

namespace {

// Measured outcomes analysed in the README ("Known failures").
const std::map<int, std::string> kKnownFailures = {
    {6, "acoustic humps carry dispersive side lobes"},
    {8, "Dirichlet-kernel floor outside the Mach cone"},
    {10, "fit window precedes the asymptotic regime"},
};

}  // namespace

int main() {
  const char* out_env = std::getenv("MVPB_ACCEPTANCE_OUT");
  const std::string out = out_env ? out_env : "acceptance_out";
  const bool reuse = std::getenv("MVPB_ACCEPTANCE_REUSE") != nullptr;
  int threads = 1;
  if (const char* t = std::getenv("MVPB_THREADS")) threads = std::max(1, std::atoi(t));

  std::vector<mvpb::Json> manifests;
  for (const std::string& study : {"coeffs", "dispersion", "green", "waves", "nsp-compare", "nonlinear"}) {
    const std::string path = out + "/manifest_" + study + ".json";
    mvpb::Json m;
    if (reuse && std::filesystem::exists(path)) {
      std::ifstream in(path);
      m = mvpb::Json::parse(in);
    } else {
      mvpb::RunConfig c;
      c.study = study;
      c.set("study", study);
      c.out_dir = out;
      c.threads = threads;
      c.seed = 20261016;
      if (const char* cache = std::getenv("MVPB_CACHE")) c.cache_dir = cache;
      std::cerr << "running " << study << "\n";
      mvpb::run_study(c, &m);
      std::cerr << "  " << m.value("status", "") << " in " << m.value("wall_clock_s", 0.0) << " s\n";
    }
    manifests.push_back(m);
  }

  const std::vector<mvpb::CriterionRow> rows = mvpb::report(manifests);
  int unexpected = 0;
  for (const mvpb::CriterionRow& r : rows) {
    std::cout << mvpb::format_row(r);
    const auto k = kKnownFailures.find(r.id);
    if (r.status != "pass") {
      if (k != kKnownFailures.end() && r.status == "fail")
        std::cout << " (known: " << k->second << ")";
      else
        ++unexpected;
    }
    std::cout << "\n";
  }
  std::cout << rows.size() << " criteria, " << unexpected << " unexpected failures\n";
  return unexpected == 0 && rows.size() == 11 ? 0 : 1;
}
