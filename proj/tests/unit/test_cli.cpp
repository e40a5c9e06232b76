#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <sys/wait.h>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(CPLA_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("exit codes") {
  const fs::path dir = fs::temp_directory_path() / "cpla_cli_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string c33 = cpla::testing::case_path("case33bw");
  const std::string samples = (dir / "s.bin").string();

  CHECK(run("parse " + c33) == 0);
  CHECK(run("solve " + c33 + " --pf-start flat") == 0);
  CHECK(run("solve " + c33 + " --scale 40") == 3);
  CHECK(run("parse " + (dir / "missing.m").string()) == 4);
  CHECK(run("frobnicate") == 2);
  CHECK(run("sample " + c33 + " -S 300 --targets 33 --out " + samples) == 0);
  CHECK(run("sample " + c33 + " -S 300 --targets 999 --out " + samples) == 2);
  CHECK(run("fit --samples " + samples + " --target 33 --cla --out " + (dir / "cla.json").string()) == 0);
  CHECK(run("fit --samples " + samples + " --target 33 --case " + c33 + " -M 3 --out " + (dir / "m.json").string()) == 0);
  CHECK(run("eval --model " + (dir / "m.json").string() + " --samples " + samples + " --baseline " +
            (dir / "cla.json").string() + " --out " + (dir / "r.json").string()) == 0);
  CHECK(fs::exists(dir / "r.json"));
  CHECK(run("eval --model " + (dir / "none.json").string() + " --samples " + samples) == 4);
  CHECK(run("fit --samples " + samples + " --target 33 --out " + (dir / "x.json").string()) == 2);
  CHECK(run("pipeline --case " + c33 + " --targets 33 -S 300 -M 2 --out-dir " + (dir / "p").string()) == 0);
  CHECK(fs::exists(dir / "p" / "sweep.csv"));
  CHECK(run("pipeline --case " + c33 + " --targets 77 --out-dir " + (dir / "q").string()) == 2);
  fs::remove_all(dir);
}
