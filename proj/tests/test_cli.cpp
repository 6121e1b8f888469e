#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const char* cli_path() { return GLRTML_CLI_PATH; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string(cli_path()) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_tiny_config(const fs::path& path) {
  std::ofstream out(path);
  out << "seed=5\n"
         "[dataset]\n"
         "num_classes=3\n"
         "per_class=12\n"
         "d_in=6\n"
         "class_sep=3.0\n"
         "anisotropy=4.0\n"
         "distractors=4\n"
         "[trainer]\n"
         "t0=4\n"
         "t1_minus_t0=2\n"
         "batch_size=8\n"
         "d=4\n"
         "hidden=8\n"
         "[loss]\n"
         "nu=0.05\n";
}

}  // namespace

TEST_CASE("gen writes six csv files deterministically") {
  const fs::path dir = fresh_dir("glrtml_cli_gen");
  const fs::path cfg = dir / "run.toml";
  write_tiny_config(cfg);

  const fs::path out1 = dir / "a";
  const fs::path out2 = dir / "b";
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + out1.string()) == 0);
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + out2.string()) == 0);

  const char* names[] = {"source_train.csv",  "source_query.csv",  "source_gallery.csv",
                         "target_train.csv",  "target_query.csv",  "target_gallery.csv"};
  for (const char* n : names) {
    CHECK(fs::exists(out1 / n));
    CHECK(slurp(out1 / n) == slurp(out2 / n));
    CHECK(!slurp(out1 / n).empty());
  }
  fs::remove_all(dir);
}

TEST_CASE("unknown config keys are rejected with exit code 2") {
  const fs::path dir = fresh_dir("glrtml_cli_badcfg");
  const fs::path cfg = dir / "bad.toml";
  {
    std::ofstream out(cfg);
    out << "[dataset]\nnum_classes=3\nmystery_knob=1\n";
  }
  CHECK(run_cli("gen --config " + cfg.string() + " --out " + dir.string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("invalid field values exit with code 2") {
  const fs::path dir = fresh_dir("glrtml_cli_badval");
  const fs::path cfg = dir / "bad.toml";
  {
    std::ofstream out(cfg);
    out << "[dataset]\nper_class=1\n";  // needs >= 2
  }
  CHECK(run_cli("gen --config " + cfg.string() + " --out " + dir.string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("missing train csv exits with code 3") {
  const fs::path dir = fresh_dir("glrtml_cli_noio");
  const fs::path cfg = dir / "run.toml";
  write_tiny_config(cfg);
  CHECK(run_cli("train --config " + cfg.string() + " --out " + dir.string() +
                " --train-csv " + (dir / "nope.csv").string()) == 3);
  fs::remove_all(dir);
}

TEST_CASE("train adapt eval score roc pipeline runs with byte-stable outputs") {
  const fs::path dir = fresh_dir("glrtml_cli_pipeline");
  const fs::path cfg = dir / "run.toml";
  write_tiny_config(cfg);
  const fs::path data = dir / "data";
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + data.string()) == 0);

  auto common = " --config " + cfg.string() + " --train-csv " +
                (data / "source_train.csv").string();

  const fs::path m1 = dir / "m1";
  const fs::path m2 = dir / "m2";
  REQUIRE(run_cli("train" + common + " --out " + m1.string()) == 0);
  REQUIRE(run_cli("train" + common + " --out " + m2.string()) == 0);
  CHECK(slurp(m1 / "model.json") == slurp(m2 / "model.json"));
  CHECK(slurp(m1 / "train_log.jsonl") == slurp(m2 / "train_log.jsonl"));

  auto eval_args = [&](const fs::path& out, const std::string& metric) {
    return "eval --config " + cfg.string() + " --model " + (m1 / "model.json").string() +
           " --query-csv " + (data / "source_query.csv").string() + " --gallery-csv " +
           (data / "source_gallery.csv").string() + " --metric " + metric + " --out " +
           out.string();
  };
  const fs::path e1 = dir / "e1";
  const fs::path e2 = dir / "e2";
  REQUIRE(run_cli(eval_args(e1, "glrt")) == 0);
  REQUIRE(run_cli(eval_args(e2, "glrt")) == 0);
  CHECK(slurp(e1 / "metrics.json") == slurp(e2 / "metrics.json"));
  REQUIRE(run_cli(eval_args(dir / "ec", "cosine")) == 0);

  // adapt on the target pool, then eval with the adapted model
  const fs::path a1 = dir / "a1";
  const std::string adapt_args = "adapt --config " + cfg.string() + " --model " +
                                 (m1 / "model.json").string() + " --target-csv " +
                                 (data / "target_train.csv").string() + " --target-csv " +
                                 (data / "target_query.csv").string() + " --target-csv " +
                                 (data / "target_gallery.csv").string() + " --out " + a1.string();
  REQUIRE(run_cli(adapt_args) == 0);
  CHECK(fs::exists(a1 / "adapted_model.json"));

  REQUIRE(run_cli("score --config " + cfg.string() + " --model " +
                  (m1 / "model.json").string() + " --query-csv " +
                  (data / "source_query.csv").string() + " --gallery-csv " +
                  (data / "source_gallery.csv").string() + " --out " + (dir / "s1").string()) ==
          0);
  CHECK(fs::exists(dir / "s1" / "scores.csv"));

  REQUIRE(run_cli("roc --config " + cfg.string() + " --model " + (m1 / "model.json").string() +
                  " --query-csv " + (data / "source_query.csv").string() +
                  " --gallery-csv " + (data / "source_gallery.csv").string() + " --out " +
                  (dir / "r1").string()) == 0);
  CHECK(fs::exists(dir / "r1" / "roc.csv"));

  fs::remove_all(dir);
}

TEST_CASE("effective config round trips through a file") {
  const fs::path dir = fresh_dir("glrtml_cli_effcfg");
  const fs::path cfg = dir / "run.toml";
  write_tiny_config(cfg);

  const fs::path eff = dir / "effective.toml";
  const std::string dump = std::string(cli_path()) + " gen --config " + cfg.string() +
                           " --emit-effective-config > " + eff.string() + " 2>/dev/null";
  REQUIRE(WEXITSTATUS(std::system(dump.c_str())) == 0);
  CHECK(!slurp(eff).empty());

  // Re-running from the emitted config reproduces the original outputs.
  const fs::path out1 = dir / "orig";
  const fs::path out2 = dir / "redo";
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + out1.string()) == 0);
  REQUIRE(run_cli("gen --config " + eff.string() + " --out " + out2.string()) == 0);
  CHECK(slurp(out1 / "source_train.csv") == slurp(out2 / "source_train.csv"));
  CHECK(slurp(out1 / "target_gallery.csv") == slurp(out2 / "target_gallery.csv"));
  fs::remove_all(dir);
}
