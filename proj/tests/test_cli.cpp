#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kCli = CFCEP_CLI_PATH;

struct Dir {
  fs::path path;
  Dir() {
    path = fs::temp_directory_path() / ("cfcep_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~Dir() { fs::remove_all(path); }
};

int run(const std::string& args, const fs::path& cwd) {
  const std::string cmd = "cd '" + cwd.string() + "' && '" + kCli.string() + "' " + args + " >out.txt 2>err.txt";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

const char* kTiny =
    "M = 5\nK = 2\narea_side_m = 300\nQ = 6\nL = 24\ndoppler = fixed 0.12\nschemes = tdd identity\n"
    "e2p = 1\nmc_realizations = 20\ndeployments = 1\nbatches = 2\nfn_grid = 0.1 0.2\n"
    "train_traces = 0\n";

}  // namespace

TEST_CASE("exit codes") {
  Dir d;
  CHECK(run("", d.path) == 2);
  CHECK(run("frobnicate", d.path) == 2);
  CHECK(run("eval --config missing.cfg", d.path) == 4);

  write(d.path / "bad.cfg", "M = 4\nwhat = 3\n");
  CHECK(run("eval --config bad.cfg", d.path) == 2);
  CHECK(slurp(d.path / "err.txt").find("line 2") != std::string::npos);

  write(d.path / "cep.cfg", "schemes = tdd cep\n");
  CHECK(run("eval --config cep.cfg --models nowhere", d.path) == 4);

  CHECK(run("gen-data --band 4 --e2p 1", d.path) == 2);
  CHECK(run("gen-data --band 1", d.path) == 2);
}

TEST_CASE("sweep output is reproducible") {
  Dir d;
  write(d.path / "tiny.cfg", kTiny);
  REQUIRE(run("sweep-fn --config tiny.cfg --seed 5 --out a.csv", d.path) == 0);
  REQUIRE(run("sweep-fn --config tiny.cfg --seed 5 --out b.csv", d.path) == 0);
  const std::string a = slurp(d.path / "a.csv");
  CHECK(a.rfind("f_n,scheme,N,", 0) == 0);
  CHECK(a == slurp(d.path / "b.csv"));
  CHECK_FALSE(fs::exists(d.path / "a.csv.tmp"));

  // stdout when --out is omitted
  REQUIRE(run("sweep-fn --config tiny.cfg --seed 5", d.path) == 0);
  CHECK(slurp(d.path / "out.txt") == a);

  REQUIRE(run("sweep-fn --config tiny.cfg --seed 6 --out c.csv", d.path) == 0);
  CHECK(slurp(d.path / "c.csv") != a);

  REQUIRE(run("eval --config tiny.cfg --out e.csv", d.path) == 0);
  CHECK(slurp(d.path / "e.csv").rfind("deployment,user,position,", 0) == 0);
}

TEST_CASE("empty training set") {
  Dir d;
  write(d.path / "tiny.cfg", kTiny);
  REQUIRE(run("gen-data --config tiny.cfg --band 2 --e2p 1 --out empty.bin", d.path) == 0);
  CHECK(fs::exists(d.path / "empty.bin"));
  CHECK(fs::file_size(d.path / "empty.bin") > 0);
  // training on it is a configuration problem, not a crash
  CHECK(run("train --config tiny.cfg --band 2 --e2p 1 --data empty.bin --out m.bin", d.path) == 2);
  CHECK_FALSE(fs::exists(d.path / "m.bin"));
}
