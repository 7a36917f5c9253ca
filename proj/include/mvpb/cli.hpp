#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace mvpb {

using Json = nlohmann::ordered_json;

enum class KeyType { Int, Real, Bool, Text, RealList };

struct KeySpec {
  std::string name;
  KeyType type;
  std::string fallback;  // default, in config syntax
  double lo = 0.0, hi = 0.0;  // inclusive numeric range (Int, Real, RealList entries)
  std::string doc;
};

// Every accepted key, in documentation order.
const std::vector<KeySpec>& config_schema();
// The schema rendered as the shipped key list.
std::string config_schema_text();

// Flat `key = value` configuration with '#' comments. Unknown keys,
// malformed lines, duplicates and out-of-range values throw ValidationError.
class RunConfig {
 public:
  RunConfig();
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);

  void set(const std::string& key, const std::string& value);

  int get_int(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_text(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;

  Json echo() const;

  std::string study;
  std::string out_dir = "out";
  int threads = 1;
  std::uint64_t seed = 0;
  std::string cache_dir;

 private:
  std::map<std::string, std::string> values_;
};

const std::vector<std::string>& study_names();

// Output directory with a file list; every file written through it gets a
// SHA-256 digest in the manifest.
class OutputDir {
 public:
  explicit OutputDir(std::string dir);
  std::string path(const std::string& name) const;
  // Columns of equal length; floats with 17 significant digits.
  void write_csv(const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& columns);
  void write_text(const std::string& name, const std::string& text);
  Json files() const;

 private:
  void record(const std::string& name);
  std::string dir_;
  std::vector<std::string> names_;
};

std::string sha256_file(const std::string& path);
std::string sha256_hex(const std::string& data);

// Executes one study and writes manifest_<study>.json into the output
// directory. Returns 0, 2 (validation) or 3 (numerical failure).
int run_study(const RunConfig& config, Json* manifest_out = nullptr);

struct CriterionRow {
  int id = 0;
  std::string name;
  std::string status;  // "pass", "fail" or "MissingStudy"
  std::string measured, expected;
};

// Cross-checks the acceptance criteria against the given manifests.
std::vector<CriterionRow> report(const std::vector<Json>& manifests);
std::string format_row(const CriterionRow& r);

// Command-line entry point: mvpb <study> [--config PATH] [--out DIR] [--threads N] [--seed U64].
int cli_main(int argc, char** argv);

}  // namespace mvpb
