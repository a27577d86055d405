#ifndef CMMV_TESTS_CLI_RUNNER_HPP
#define CMMV_TESTS_CLI_RUNNER_HPP

// Drives the cmmv_cli binary from tests: runs commands in a working
// directory and snapshots everything they wrote.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace cli_runner {

namespace fs = std::filesystem;

inline std::string binary() { return CMMV_CLI_PATH; }

/// Exit status of `cmmv_cli <args>` run inside `dir`; stdout and stderr are
/// appended to dir/log.txt.
inline int run(const fs::path& dir, const std::string& args) {
  fs::create_directories(dir);
  const std::string cmd = "cd '" + dir.string() + "' && '" + binary() + "' " + args + " >> log.txt 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = s.str();
  }
  return files;
}

struct Step {
  std::string subcommand;
  std::string args;
};

/// One invocation of every subcommand on a small synthetic world.
inline std::vector<Step> pipeline() {
  return {
      {"synthesize", "--out-dir syn --seed 5 --dates 60 --noise 2e-4"},
      {"ingest", "--input syn/quotes.csv --out-dir ing"},
      {"calibrate-m1", "--input ing/chains.json --out-dir m1 --cv --seed 5"},
      {"calibrate-m2", "--input ing/chains.json --strike 2100 --out-dir m2 --seed 5"},
      {"fit-ss", "--input syn/quotes.csv --out-dir ss"},
      {"predict", "--input ing/chains.json --model m1/model_m1.json --model ss/model_ss.json --out-dir pr"},
      {"errors",
       "--input ing/chains.json --model m1/model_m1.json --model m2/model_m2.json --model ss/model_ss.json "
       "--out-dir er --format json"},
      {"surface", "--model m1/model_m1.json --extend-horizon --out-dir sf"},
      {"smile-shift", "--input ing/chains.json --shifts=-63,0,63 --out-dir sm --seed 5"},
      {"simulate", "--model syn/truth.json --paths 3 --steps 500 --seed 5 --out-dir sim"},
      {"recover", "--model syn/truth.json --steps 200000 --seed 5 --out-dir rc"},
      {"benchmark-cma", "--function rosenbrock --dimension 5 --seed 3 --out-dir bm"},
  };
}

struct Comparison {
  std::vector<std::string> failed;     // nonzero exit in either run
  std::vector<std::string> different;  // outputs not byte-identical
  std::size_t files = 0;
};

/// Runs the pipeline twice in fresh directories under `root` and compares
/// the output directories of each step byte for byte.
inline Comparison compare_runs(const fs::path& root) {
  fs::remove_all(root);
  Comparison c;
  const auto steps = pipeline();
  for (const char* run_dir : {"a", "b"}) {
    for (const auto& s : steps) {
      if (run(root / run_dir, s.subcommand + " " + s.args) != 0) c.failed.push_back(s.subcommand);
    }
  }
  const auto a = snapshot(root / "a"), b = snapshot(root / "b");
  c.files = a.size();
  for (const auto& s : steps) {
    const auto pos = s.args.find("--out-dir ");
    const std::string dir = s.args.substr(pos + 10, s.args.find(' ', pos + 10) - pos - 10) + "/";
    bool same = true, any = false;
    for (const auto& [name, content] : a) {
      if (name.rfind(dir, 0) != 0) continue;
      any = true;
      const auto it = b.find(name);
      same = same && it != b.end() && it->second == content;
    }
    if (!any || !same) c.different.push_back(s.subcommand);
  }
  if (a.at("log.txt") != b.at("log.txt")) c.different.push_back("stdout");
  return c;
}

}  // namespace cli_runner

#endif  // CMMV_TESTS_CLI_RUNNER_HPP
