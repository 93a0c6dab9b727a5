#include <doctest.h>

#include <cstdlib>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgrec/checkpoint.h"
#include "kgrec/cli.h"
#include "kgrec/config.h"
#include "support.h"

using namespace kgrec;

namespace {

struct CliRun {
  int code = 0;
  std::string out;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), {"kgrec", "--log-level", "off"});
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream captured;
  std::streambuf* old = std::cout.rdbuf(captured.rdbuf());
  const int code = run_cli(static_cast<int>(argv.size()), argv.data());
  std::cout.rdbuf(old);
  return {code, captured.str()};
}

std::string p(const std::filesystem::path& x) { return x.string(); }

nlohmann::json read_json(const std::filesystem::path& f) { return nlohmann::json::parse(testing::slurp(f)); }

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("train with zero epochs writes manifest and initial checkpoint") {
    testing::TempDir dir;
    const auto out = dir.path() / "run";
    CHECK(run({"train", "--dataset", "toy", "--epochs", "0", "--out", p(out)}).code == 0);
    CHECK(std::filesystem::exists(out / "best.ckpt"));
    CHECK(std::filesystem::exists(out / "metrics.jsonl"));
    CHECK(load_checkpoint(out / "last.ckpt").step == 0);
    const auto m = read_json(out / "manifest.json");
    CHECK(m["command"] == "train");
    CHECK(m["seed"] == 2023);
    CHECK(m["dataset"]["spec"] == "toy");
    CHECK(m["dataset"]["content_hash"].get<std::string>().size() == 16);
    CHECK(m["config_values"]["k_m"] == "128");
  }

  TEST_CASE("invalid config exits 2") {
    testing::TempDir dir;
    const auto r = run({"train", "--dataset", "toy", "--k-m", "5000000", "--out", p(dir.path() / "x")});
    CHECK(r.code == 2);
    CHECK_FALSE(std::filesystem::exists(dir.path() / "x" / "manifest.json"));
    CHECK(run({"train", "--dataset", "toy", "--set", "bogus=1", "--out", p(dir.path() / "y")}).code == 2);
    CHECK(run({"train", "--dataset", p(dir.path() / "nowhere"), "--out", p(dir.path() / "z")}).code == 2);
    CHECK(run({"train", "--dataset", "toy"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
  }

  TEST_CASE("sweep materialises the mask-size grid") {
    testing::TempDir dir;
    const auto out = dir.path() / "sweep";
    const std::string cfg = std::string(KGREC_SOURCE_DIR) + "/configs/paper-lastfm.toml";
    // The default toy KG is too small for k_m = 1024 at rho_k = 0.5; the whole grid is refused up front.
    CHECK(run({"train", "--dataset", "toy", "--config", cfg, "--epochs", "0", "--sweep", "k_m", "--out", p(out)}).code ==
          2);
    CHECK_FALSE(std::filesystem::exists(out));
    const auto r = run({"train", "--dataset", "toy", "--config", cfg, "--set", "toy.num_items=300", "--set",
                        "toy.num_entities=800", "--epochs", "0", "--sweep", "k_m", "--out", p(out)});
    CHECK(r.code == 0);
    for (const char* v : {"128", "256", "512", "1024"}) {
      CAPTURE(v);
      const auto m = read_json(out / (std::string("k_m=") + v) / "manifest.json");
      CHECK(m["config_values"]["k_m"] == v);
    }
    CHECK(testing::slurp(out / "sweep.txt").find("1024") != std::string::npos);
  }

  TEST_CASE("overwrite guard refuses a non-empty output directory") {
    testing::TempDir dir;
    dir.write("busy/keep.txt", "x");
    CHECK(run({"train", "--dataset", "toy", "--epochs", "0", "--overwrite=false", "--out", p(dir.path() / "busy")})
              .code == 2);
    CHECK(testing::slurp(dir.path() / "busy" / "keep.txt") == "x");
    CHECK_FALSE(std::filesystem::exists(dir.path() / "busy" / "manifest.json"));
  }

  TEST_CASE("evaluate checkpoint errors exit 2") {
    testing::TempDir dir;
    CHECK(run({"evaluate", "--dataset", "toy", "--checkpoint", p(dir.path() / "none.ckpt")}).code == 2);
    const auto out = dir.path() / "run";
    REQUIRE(run({"train", "--dataset", "toy", "--epochs", "0", "--out", p(out)}).code == 0);
    CHECK(run({"evaluate", "--dataset", "toy", "--dim", "16", "--checkpoint", p(out / "best.ckpt")}).code == 2);
    dir.write("junk.ckpt", "garbage");
    CHECK(run({"evaluate", "--dataset", "toy", "--checkpoint", p(dir.path() / "junk.ckpt")}).code == 2);
    CHECK(run({"evaluate", "--dataset", "toy", "--checkpoint", p(out / "best.ckpt"), "--split", "dev"}).code == 2);
  }

  TEST_CASE("explain on an untrained checkpoint reports unit means") {
    testing::TempDir dir;
    const auto out = dir.path() / "run";
    REQUIRE(run({"train", "--dataset", "toy", "--epochs", "0", "--out", p(out)}).code == 0);
    const auto rep = dir.path() / "explain";
    CHECK(run({"evaluate", "--dataset", "toy", "--checkpoint", p(out / "best.ckpt"), "--explain", "--groups",
               "user-degree", "--partial-kg", "0.5,1.0", "--out", p(rep)})
              .code == 0);
    std::istringstream kv(testing::slurp(rep / "report.kv"));
    std::string line;
    int relations = 0;
    while (std::getline(kv, line)) {
      if (line.rfind("gamma_mean.", 0) != 0) continue;
      ++relations;
      CHECK(std::abs(std::stod(line.substr(line.find('=') + 1)) - 1.0) <= 1e-3);
    }
    CHECK(relations == 10);
    CHECK(std::filesystem::exists(rep / "groups.txt"));
    CHECK(std::filesystem::exists(rep / "partial_kg.txt"));
    CHECK(read_json(rep / "manifest.json")["checkpoint"]["fnv1a64"].get<std::string>().size() == 16);
  }

  TEST_CASE("trained model nearly memorises its training split") {
    testing::TempDir dir;
    const auto out = dir.path() / "run";
    REQUIRE(run({"train", "--dataset", "toy", "--out", p(out)}).code == 0);
    const auto ev = dir.path() / "ev";
    REQUIRE(run({"evaluate", "--dataset", "toy", "--checkpoint", p(out / "best.ckpt"), "--split", "train", "--out",
                 p(ev)})
                .code == 0);
    const std::string kv = testing::slurp(ev / "report.kv");
    const auto pos = kv.find("train_recall@20=");
    REQUIRE(pos != std::string::npos);
    CHECK(std::stod(kv.substr(pos + 16)) >= 0.9);
  }

  TEST_CASE("manifest replay reproduces the metrics log bit for bit") {
    testing::TempDir dir;
    const auto a = dir.path() / "a", b = dir.path() / "b";
    REQUIRE(run({"train", "--dataset", "toy", "--epochs", "3", "--seed", "11", "--tau", "0.3", "--out", p(a)}).code ==
            0);
    REQUIRE(run({"train", "--from-manifest", p(a / "manifest.json"), "--out", p(b)}).code == 0);
    const std::string log = testing::slurp(a / "metrics.jsonl");
    CHECK(std::count(log.begin(), log.end(), '\n') == 4);
    CHECK(log == testing::slurp(b / "metrics.jsonl"));
    CHECK(testing::slurp(a / "test_metrics.kv") == testing::slurp(b / "test_metrics.kv"));
    CHECK(read_json(b / "manifest.json")["seed"] == 11);
    dir.write("bad.json", "{");
    CHECK(run({"train", "--from-manifest", p(dir.path() / "bad.json"), "--out", p(dir.path() / "c")}).code == 2);
  }

  TEST_CASE("seed falls back to KGREC_SEED") {
    testing::TempDir dir;
    ::setenv("KGREC_SEED", "77", 1);
    const int code = run({"train", "--dataset", "toy", "--epochs", "0", "--out", p(dir.path() / "e")}).code;
    const int flag = run({"train", "--dataset", "toy", "--epochs", "0", "--seed", "5", "--out", p(dir.path() / "f")}).code;
    ::unsetenv("KGREC_SEED");
    REQUIRE(code == 0);
    REQUIRE(flag == 0);
    CHECK(read_json(dir.path() / "e" / "manifest.json")["seed"] == 77);
    CHECK(read_json(dir.path() / "f" / "manifest.json")["seed"] == 5);
  }

  TEST_CASE("selfcheck suite filter and fault injection") {
    const auto m = run({"selfcheck", "--suite", "metrics"});
    CHECK(m.code == 0);
    CHECK(m.out.find("suite metrics: PASS") != std::string::npos);
    CHECK(m.out.find("suite gradcheck") == std::string::npos);
    const auto all = run({"selfcheck", "--trials", "20"});
    CHECK(all.code == 0);
    for (const char* s : {"gradcheck", "dense", "metrics", "rationale", "losses"}) {
      CHECK(all.out.find(std::string("suite ") + s + ": PASS") != std::string::npos);
    }
    const auto bad = run({"selfcheck", "--suite", "gradcheck", "--inject-gradient-fault"});
    CHECK(bad.code == 1);
    CHECK(bad.out.find("suite gradcheck: FAIL") != std::string::npos);
    CHECK(run({"selfcheck", "--suite", "nope"}).code == 2);
    CHECK(run({"gradcheck"}).code == 0);
  }

  TEST_CASE("dump-defaults round-trips through the config parser") {
    const auto r = run({"config", "--dump-defaults"});
    CHECK(r.code == 0);
    CHECK(dump_config(parse_config(r.out)) == r.out);
    CHECK(r.out == dump_config(TrainConfig{}));
    CHECK(r.out.find("k_m = 512") != std::string::npos);
  }

  TEST_CASE("fnv1a64 reference values") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  }
}
