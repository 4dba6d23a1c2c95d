#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "spikefuse_cli/cli.hpp"

namespace fs = std::filesystem;
using spikefuse::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string l; std::getline(is, l);) n += l.empty() ? 0 : 1;
  return n;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

}  // namespace

TEST_CASE("usage errors exit with 1 and print the synopsis") {
  auto none = cli({});
  CHECK(none.code == 1);
  CHECK(none.err.find("Usage") != std::string::npos);
  CHECK(cli({"frobnicate"}).code == 1);
  CHECK(cli({"synth", "--no-such-flag"}).code == 1);
  CHECK(cli({"eval"}).code == 1);
  CHECK(cli({"synth", "--preset", "huge"}).code == 1);
  auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("energy-report") != std::string::npos);
}

TEST_CASE("runtime failures exit with 2") {
  TempDir tmp("spikefuse_cli_fail");
  auto r = cli({"eval", "--checkpoint", tmp / "missing.bin", "--out", tmp / "e"});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") == 0);
  CHECK(cli({"synth", "--set", "train.unknown=1", "--out", tmp / "s"}).code == 2);
}

TEST_CASE("synth writes one manifest entry per clip, reproducibly") {
  TempDir tmp("spikefuse_cli_synth");
  auto a = cli({"synth", "--classes", "4", "--samples-per-class", "16", "--seed", "7", "--out", tmp / "a"});
  REQUIRE(a.code == 0);
  CHECK(line_count(tmp.path / "a" / "manifest.tsv") == 64);
  CHECK(fs::exists(tmp.path / "a" / "resolved_config.txt"));
  auto b = cli({"synth-data", "--classes", "4", "--samples-per-class", "16", "--seed", "7", "--out", tmp / "b"});
  REQUIRE(b.code == 0);
  for (const auto& e : fs::directory_iterator(tmp.path / "a"))
    CHECK(slurp(e.path()) == slurp(tmp.path / "b" / e.path().filename()));
}

TEST_CASE("seed falls back to the environment") {
  TempDir tmp("spikefuse_cli_env");
  ::setenv("SPIKEFUSE_SEED", "31", 1);
  auto r = cli({"synth", "--classes", "2", "--samples-per-class", "1", "--out", tmp / "env"});
  ::unsetenv("SPIKEFUSE_SEED");
  REQUIRE(r.code == 0);
  CHECK(slurp(tmp.path / "env" / "resolved_config.txt").find("run.seed = 31\n") != std::string::npos);
  auto flag = cli({"synth", "--classes", "2", "--samples-per-class", "1", "--seed", "31", "--out", tmp / "flag"});
  REQUIRE(flag.code == 0);
  CHECK(slurp(tmp.path / "env" / "manifest.tsv") == slurp(tmp.path / "flag" / "manifest.tsv"));
  CHECK(slurp(tmp.path / "env" / "clip_1.evt") == slurp(tmp.path / "flag" / "clip_1.evt"));
}

TEST_CASE("train, eval and energy-report on a tiny run") {
  TempDir tmp("spikefuse_cli_train");
  REQUIRE(cli({"synth", "--samples-per-class", "2", "--seed", "3", "--out", tmp / "data"}).code == 0);
  const std::vector<std::string> train_args{"train",  "--data", tmp / "data",       "--seed", "3",
                                            "--set",  "train.epochs=2", "--set",   "train.batch_size=4",
                                            "--out",  tmp / "run"};
  auto t = cli(train_args);
  REQUIRE(t.code == 0);
  CHECK(t.out.find("train_acc=") != std::string::npos);
  CHECK(line_count(tmp.path / "run" / "metrics.log") == 2);
  REQUIRE(fs::exists(tmp.path / "run" / "checkpoint.bin"));

  // the resolved snapshot reproduces the run
  auto again = cli({"train", "--data", tmp / "data", "--config", tmp / "run/resolved_config.txt", "--out",
                    tmp / "rerun"});
  REQUIRE(again.code == 0);
  CHECK(slurp(tmp.path / "run" / "checkpoint.bin") == slurp(tmp.path / "rerun" / "checkpoint.bin"));
  CHECK(slurp(tmp.path / "run" / "metrics.log") == slurp(tmp.path / "rerun" / "metrics.log"));

  auto e = cli({"eval", "--checkpoint", tmp / "run/checkpoint.bin", "--data", tmp / "data", "--out", tmp / "ev"});
  REQUIRE(e.code == 0);
  CHECK(slurp(tmp.path / "ev" / "eval.txt").find("samples=8") != std::string::npos);

  auto rep = cli({"energy-report", "--checkpoint", tmp / "run/checkpoint.bin", "--probe", tmp / "data", "--format",
                  "json", "--out", tmp / "en"});
  REQUIRE(rep.code == 0);
  CHECK(rep.out.find("total_pj") != std::string::npos);
  auto doc = nlohmann::json::parse(slurp(tmp.path / "en" / "energy.json"));
  double rows = 0.0;
  std::size_t first = 0;
  for (const auto& r : doc["rows"]) {
    rows += r["pj"].get<double>();
    first += r["kind"] == "first_lp" ? 1 : 0;
  }
  CHECK(first == 1);
  CHECK(doc["total_pj"].get<double>() == rows);
  CHECK(doc["mac_pj"].get<double>() + doc["ac_pj"].get<double>() ==
        doctest::Approx(doc["total_pj"].get<double>()).epsilon(1e-12));

  CHECK(cli({"energy-report", "--checkpoint", tmp / "run/checkpoint.bin", "--probe", tmp / "data", "--format",
             "xml"})
            .code == 1);
}
