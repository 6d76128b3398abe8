#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = 0;
  std::string output;  // stdout and stderr interleaved
};

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("xvtp_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Result run(const std::string& args, const fs::path& dir) {
  const fs::path log = dir / "cli.log";
  const std::string cmd = std::string("\"") + XVTP_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.output = read_file(log);
  return r;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("gen-data with zero scenes writes an empty file") {
  const fs::path dir = fresh_dir("gen_empty");
  const Result r = run("gen-data --count 0 --out " + q(dir / "empty.jsonl"), dir);
  CHECK(r.status == 0);
  REQUIRE(fs::exists(dir / "empty.jsonl"));
  CHECK(fs::file_size(dir / "empty.jsonl") == 0);
}

TEST_CASE("gen-data is idempotent") {
  const fs::path dir = fresh_dir("gen_idem");
  const std::string args = "gen-data --count 5 --seed 3 --out " + q(dir / "a.jsonl");
  REQUIRE(run(args, dir).status == 0);
  const std::string first = read_file(dir / "a.jsonl");
  REQUIRE(run(args, dir).status == 0);
  CHECK(read_file(dir / "a.jsonl") == first);
  CHECK(count_lines(first) == 5);
  CHECK(first.front() == '{');
}

TEST_CASE("train, eval, predict and plot") {
  const fs::path dir = fresh_dir("pipeline");
  REQUIRE(run("gen-data --count 3 --seed 1 --out " + q(dir / "d.jsonl"), dir).status == 0);

  SUBCASE("zero epochs writes the initial checkpoint") {
    const Result r = run("train --data " + q(dir / "d.jsonl") + " --epochs 0 --out " +
                             q(dir / "c.json") + " --history " + q(dir / "h.json"),
                         dir);
    CHECK(r.status == 0);
    REQUIRE(fs::exists(dir / "c.json"));
    const auto doc = nlohmann::json::parse(read_file(dir / "c.json"));
    CHECK(doc.at("format") == "xvtp-checkpoint/1");
    CHECK(doc.at("epoch") == 0);
    CHECK(nlohmann::json::parse(read_file(dir / "h.json")).empty());
  }

  SUBCASE("every stage is idempotent and plot writes two panels per sample") {
    const std::string train = "train --data " + q(dir / "d.jsonl") +
                              " --epochs 1 --batch-size 2 --out " + q(dir / "c.json") +
                              " --history " + q(dir / "h.json");
    REQUIRE(run(train, dir).status == 0);
    const std::string ckpt = read_file(dir / "c.json");
    REQUIRE(run(train, dir).status == 0);
    CHECK(read_file(dir / "c.json") == ckpt);

    const std::string eval = "eval --data " + q(dir / "d.jsonl") + " --checkpoint " +
                             q(dir / "c.json") + " --out " + q(dir / "r.json");
    REQUIRE(run(eval, dir).status == 0);
    const std::string report = read_file(dir / "r.json");
    CHECK(nlohmann::json::parse(report).at("n") == 3);
    REQUIRE(run(eval, dir).status == 0);
    CHECK(read_file(dir / "r.json") == report);

    const std::string predict = "predict --data " + q(dir / "d.jsonl") + " --checkpoint " +
                                q(dir / "c.json") + " --out " + q(dir / "p.jsonl");
    REQUIRE(run(predict, dir).status == 0);
    const std::string preds = read_file(dir / "p.jsonl");
    CHECK(count_lines(preds) == 3);
    REQUIRE(run(predict, dir).status == 0);
    CHECK(read_file(dir / "p.jsonl") == preds);

    const std::string plot = "plot --data " + q(dir / "d.jsonl") + " --predictions " +
                             q(dir / "p.jsonl") + " --out-dir " + q(dir / "img");
    REQUIRE(run(plot, dir).status == 0);
    std::vector<std::string> images;
    for (const auto& e : fs::directory_iterator(dir / "img")) images.push_back(e.path().filename());
    CHECK(images.size() == 6);
    for (int i = 0; i < 3; ++i) {
      for (const char* view : {"bev", "fpv"}) {
        const fs::path png = dir / "img" / ("sample_" + std::to_string(i) + "_" + view + ".png");
        REQUIRE(fs::exists(png));
        CHECK(read_file(png).substr(1, 3) == "PNG");
      }
    }
    const std::string bev0 = read_file(dir / "img" / "sample_0_bev.png");
    REQUIRE(run(plot, dir).status == 0);
    CHECK(read_file(dir / "img" / "sample_0_bev.png") == bev0);
  }
}

TEST_CASE("help lists every flag with its default") {
  const fs::path dir = fresh_dir("help");
  const std::vector<std::pair<std::string, std::vector<std::string>>> expected = {
      {"gen-data", {"--out", "--count", "--seed", "--branches", "--t-obs", "--t-pred", "--noise", "100", "12"}},
      {"train",
       {"--data", "--config", "--preset", "--out", "--history", "--resume", "--epochs", "--seed",
        "--lr", "--batch-size", "--beta", "--epsilon", "--no-que", "--no-rm", "--no-ca", "desk",
        "checkpoint.json", "30", "16"}},
      {"eval", {"--data", "--checkpoint", "--out"}},
      {"predict", {"--data", "--checkpoint", "--out"}},
      {"plot", {"--data", "--predictions", "--out-dir"}},
  };
  for (const auto& [sub, needles] : expected) {
    const Result r = run(sub + " --help", dir);
    CHECK(r.status == 0);
    for (const std::string& needle : needles) {
      CHECK_MESSAGE(r.output.find(needle) != std::string::npos, sub << " help lacks " << needle);
    }
  }
}

TEST_CASE("bad invocations exit nonzero with a message") {
  const fs::path dir = fresh_dir("errors");
  const Result unknown = run("gen-data --out " + q(dir / "x.jsonl") + " --bogus 1", dir);
  CHECK(unknown.status != 0);
  CHECK(unknown.output.find("bogus") != std::string::npos);

  const Result missing = run("eval --data " + q(dir / "nope.jsonl") + " --checkpoint " +
                                 q(dir / "nope.json"),
                             dir);
  CHECK(missing.status != 0);
  CHECK_FALSE(missing.output.empty());

  const Result none = run("", dir);
  CHECK(none.status != 0);

  std::ofstream(dir / "broken.jsonl") << "{\"not\": \"a scene\"}\n";
  const Result broken = run("train --data " + q(dir / "broken.jsonl") + " --epochs 0 --out " +
                                q(dir / "c.json") + " --history " + q(dir / "h.json"),
                            dir);
  CHECK(broken.status != 0);
  CHECK(broken.output.find("line 1") != std::string::npos);
}
