#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const std::string kCli = BSVM_CLI_PATH;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("bsvm_cli_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& stdout_to = "") {
  std::string cmd = kCli + " " + args;
  if (!stdout_to.empty()) cmd += " > " + stdout_to + " 2>/dev/null";
  else cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_file(const std::string& a, const std::string& b) { return slurp(a) == slurp(b); }

}  // namespace

TEST_CASE("synth then train then predict round trip") {
  TempDir dir;
  REQUIRE(run("synth --out " + dir.file("blobs.csv") + " --n 90 --classes 3 --separation 6 --seed 4") == 0);
  REQUIRE(fs::exists(dir.file("blobs.csv")));
  REQUIRE(fs::exists(dir.file("blobs.manifest.json")));

  REQUIRE(run("train --data " + dir.file("blobs.csv") + " --label target --out " +
              dir.file("model.json") + " --inducing 8 --epochs 60 --lr 0.02 --seed 1") == 0);
  CHECK(fs::exists(dir.file("model.json")));
  CHECK(fs::exists(dir.file("model.trace.csv")));
  CHECK(fs::exists(dir.file("model.manifest.json")));

  REQUIRE(run("predict --model " + dir.file("model.json") + " --data " + dir.file("blobs.csv") +
              " --label target --out " + dir.file("pred.csv") + " --seed 2") == 0);
  CHECK(fs::exists(dir.file("pred.csv")));

  std::ifstream pred(dir.file("pred.csv"));
  std::string header;
  std::getline(pred, header);
  CHECK(header == "index,predicted_class,variation_ratio,mean_1,mean_2,mean_3,var_1,var_2,var_3");
  int rows = 0;
  std::string line;
  while (std::getline(pred, line)) ++rows;
  CHECK(rows == 90);
}

TEST_CASE("train with zero epochs emits the initialization model") {
  TempDir dir;
  REQUIRE(run("synth --out " + dir.file("d.csv") + " --n 30 --classes 2 --seed 3") == 0);
  REQUIRE(run("train --data " + dir.file("d.csv") + " --label target --out " +
              dir.file("m.json") + " --epochs 0 --inducing 4") == 0);
  const std::string trace = slurp(dir.file("m.trace.csv"));
  CHECK(trace == "epoch,elbo,seconds\n");
  const std::string model = slurp(dir.file("m.json"));
  CHECK(model.find("\"format_version\"") != std::string::npos);
}

TEST_CASE("coordinate ascent dispatch") {
  TempDir dir;
  REQUIRE(run("synth --out " + dir.file("d.csv") + " --n 60 --classes 3 --separation 5 --seed 6") == 0);
  REQUIRE(run("train --data " + dir.file("d.csv") + " --label target --out " +
              dir.file("m.json") + " --method coord_ascent --rho 0.5 --epochs 20 --inducing 5") ==
          0);
  std::ifstream trace(dir.file("m.trace.csv"));
  std::string line;
  int rows = -1;  // header
  while (std::getline(trace, line)) ++rows;
  CHECK(rows == 20);
}

TEST_CASE("exit codes") {
  TempDir dir;
  SUBCASE("missing data file is an ingestion error") {
    CHECK(run("train --data " + dir.file("nope.csv") + " --label target --out " +
              dir.file("m.json")) == 1);
  }
  SUBCASE("bad flags") {
    CHECK(run("train --data x.csv") == 3);           // missing required --out
    CHECK(run("no-such-subcommand") == 3);
    CHECK(run("train --data x.csv --label t --out m.json --method bogus") == 3);
  }
  SUBCASE("help exits zero and lists flags with defaults") {
    TempDir help_dir;
    CHECK(run("--help") == 0);
    for (const char* sub : {"train", "predict", "active-learn", "rank", "gradcheck", "synth"}) {
      const std::string out = help_dir.file(std::string(sub) + ".txt");
      CHECK(run(std::string(sub) + " --help", out) == 0);
      const std::string text = slurp(out);
      CHECK(text.find("OPTIONS") != std::string::npos);
    }
    const std::string train_help = slurp(help_dir.file("train.txt"));
    CHECK(train_help.find("--epochs") != std::string::npos);
    CHECK(train_help.find("1000") != std::string::npos);  // default shown
    CHECK(train_help.find("0.0005") != std::string::npos);
  }
  SUBCASE("numerical blow-up aborts with exit code 2") {
    TempDir d2;
    REQUIRE(run("synth --out " + d2.file("d.csv") + " --n 30 --classes 2 --seed 2") == 0);
    CHECK(run("train --data " + d2.file("d.csv") + " --label target --out " +
              d2.file("m.json") + " --lr 1e12 --epochs 40 --inducing 4") == 2);
  }
}

TEST_CASE("gradcheck subcommand") {
  CHECK(run("gradcheck --n 12 --classes 3 --inducing 4 --seed 7") == 0);
  CHECK(run("gradcheck --n 12 --classes 3 --inducing 4 --seed 7 --perturb-analytic 1e-3") == 2);

  TempDir dir;
  REQUIRE(run("gradcheck --seed 7", dir.file("a.txt")) == 0);
  REQUIRE(run("gradcheck --seed 7", dir.file("b.txt")) == 0);
  CHECK(same_file(dir.file("a.txt"), dir.file("b.txt")));
}

TEST_CASE("rank subcommand reproduces the tie example") {
  TempDir dir;
  std::ofstream(dir.file("table.csv"))
      << "dataset,method,accuracy\nd1,m1,1.0\nd1,m2,1.0\nd1,m3,0.8\n";
  REQUIRE(run("rank --table " + dir.file("table.csv") + " --out " + dir.file("ranks.csv"),
              dir.file("stdout.txt")) == 0);
  const std::string csv = slurp(dir.file("ranks.csv"));
  CHECK(csv.find("m1,1.5") != std::string::npos);
  CHECK(csv.find("m2,1.5") != std::string::npos);
  CHECK(csv.find("m3,3") != std::string::npos);
  const std::string table = slurp(dir.file("stdout.txt"));
  CHECK(table.find("mean_rank") != std::string::npos);
}

TEST_CASE("active-learn produces init plus budget rows per seed and an aggregate") {
  TempDir dir;
  REQUIRE(run("synth --out " + dir.file("pool.csv") + " --n 60 --classes 3 --separation 4 --seed 8") == 0);
  REQUIRE(run("synth --out " + dir.file("test.csv") + " --n 30 --classes 3 --separation 4 --seed 9") == 0);
  REQUIRE(run("active-learn --pool " + dir.file("pool.csv") + " --test " + dir.file("test.csv") +
              " --label target --policy variation_ratio --budget 3 --inducing 4"
              " --retrain-epochs 20 --seeds 1,2 --out-prefix " +
              dir.file("al")) == 0);
  CHECK(fs::exists(dir.file("al.seed1.csv")));
  CHECK(fs::exists(dir.file("al.seed2.csv")));
  CHECK(fs::exists(dir.file("al.aggregate.csv")));
  CHECK(fs::exists(dir.file("al.manifest.json")));

  std::ifstream trace(dir.file("al.seed1.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(trace, line)) ++rows;
  CHECK(rows == 4);  // init + 3 queries
}

TEST_CASE("reruns with identical flags are byte-identical") {
  TempDir a, b;
  auto pipeline = [&](const TempDir& dir) {
    REQUIRE(run("synth --out " + dir.file("d.csv") + " --n 60 --classes 3 --separation 5 --seed 11") == 0);
    REQUIRE(run("train --data " + dir.file("d.csv") + " --label target --out " +
                dir.file("m.json") + " --inducing 6 --epochs 25 --seed 11") == 0);
    REQUIRE(run("predict --model " + dir.file("m.json") + " --data " + dir.file("d.csv") +
                " --label target --out " + dir.file("p.csv") + " --seed 11") == 0);
  };
  pipeline(a);
  pipeline(b);
  CHECK(same_file(a.file("d.csv"), b.file("d.csv")));
  CHECK(same_file(a.file("m.json"), b.file("m.json")));
  CHECK(same_file(a.file("p.csv"), b.file("p.csv")));
}
