#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "emomsase/cli.hpp"
#include "emomsase/error.hpp"
#include "support.hpp"

using namespace emomsase;
using namespace emomsase::cli;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an emomsase::Error");
  return ErrorKind::InvalidArgument;
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

/// Runs the command-line tool with stdout and stderr captured into one string.
CliResult run_cli(const std::string& args, const testing::TempDir& dir, const std::string& env = "") {
  const auto log = dir / "cli_output.txt";
  const auto cmd = fmt::format("{} \"{}\" {} > \"{}\" 2>&1", env, EMOMSASE_CLI_PATH, args, log.string());
  const int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.output = testing::read_text(log);
  return r;
}

/// A small dataset and matching config: 6 participants, 4 videos, one channel per domain.
struct TinyProject {
  testing::TempDir dir{"cli"};
  std::filesystem::path config_path;

  TinyProject() {
    nlohmann::json cfg = {
        {"data_dir", (dir / "data").string()},
        {"cache_dir", (dir / "cache").string()},
        {"channels", {{"Peripheral", {"EDA"}}, {"Trunk", {"LAT_ACC"}}, {"Head", {"L_EP_Y"}}}},
        {"model", {{"hidden", 4}, {"layers", 1}}},
        {"train", {{"max_epochs", 2}, {"early_stop_patience", 1}, {"batch_size", 8}}},
        {"synth", {{"participants", 6}, {"videos", 4}, {"duration_s", 45}}},
    };
    config_path = dir / "config.json";
    testing::write_text(config_path, cfg.dump(2));
  }

  std::string config_flag() const { return fmt::format("--config \"{}\"", config_path.string()); }
};

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config files override defaults and reject unknown keys") {
  RunConfig c;
  apply_json(c, R"({"seed": 9, "model": {"hidden": 16}, "train": {"learning_rate": 0.01}, "fusion": "sum"})");
  CHECK(c.seed == 9);
  CHECK(c.hidden == 16);
  CHECK(c.layers == 2);
  CHECK(c.train.learning_rate == 0.01);
  CHECK(c.fusion == evaluate::Fusion::DecisionSum);
  CHECK(kind_of([&] { apply_json(c, R"({"sede": 1})"); }) == ErrorKind::UnknownKey);
  CHECK(kind_of([&] { apply_json(c, R"({"model": {"hiden": 1}})"); }) == ErrorKind::UnknownKey);
  CHECK(kind_of([&] { apply_json(c, R"({"channels": {"Legs": ["X"]}})"); }) == ErrorKind::UnknownKey);
  CHECK(kind_of([&] { apply_json(c, "{not json"); }) == ErrorKind::ParseError);
  CHECK(kind_of([&] { apply_json(c, R"({"split": "kfold3"})"); }) == ErrorKind::InvalidArgument);
}

TEST_CASE("default channels are the best combination") {
  const RunConfig c;
  const auto ch = c.selected_channels();
  CHECK(ch.size() == 10);
  CHECK(std::find(ch.begin(), ch.end(), "TEMP") != ch.end());
  CHECK(c.hidden == 128);
  CHECK(c.train.batch_size == 16);
}

TEST_CASE("the config hash ignores paths and parallelism") {
  RunConfig a;
  RunConfig b;
  b.out_dir = "elsewhere";
  b.jobs = 4;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 64);
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("usage errors exit with status 2") {
  testing::TempDir dir("usage");
  CHECK(run_cli("run --labels happy", dir).exit_code == 2);
  CHECK(run_cli("run --split kfold3", dir).exit_code == 2);
  CHECK(run_cli("frobnicate", dir).exit_code == 2);
  CHECK(run_cli("", dir).exit_code == 2);
  testing::write_text(dir / "bad.json", R"({"labelz": "general"})");
  const auto r = run_cli(fmt::format("run --config \"{}\"", (dir / "bad.json").string()), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("UnknownKey") != std::string::npos);
}

TEST_CASE("every command documents itself") {
  testing::TempDir dir("help");
  for (const auto* cmd : {"", "synth ", "preprocess ", "run ", "gradcheck ", "report "}) {
    const auto r = run_cli(fmt::format("{}--help", cmd), dir);
    CHECK(r.exit_code == 0);
    const bool documented = std::string_view(cmd).empty() || r.output.find("--seed") != std::string::npos;
    CHECK(documented);
  }
}

TEST_CASE("gradcheck passes by default and fails at zero tolerance") {
  testing::TempDir dir("gc");
  auto ok = run_cli("gradcheck --seeds 2", dir);
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("PASS") != std::string::npos);
  CHECK(run_cli("gradcheck --tolerance 0", dir).exit_code == 1);
  testing::write_text(dir / "strict.json", R"({"gradcheck": {"tolerance": 0}})");
  const auto file = fmt::format("--config \"{}\"", (dir / "strict.json").string());
  CHECK(run_cli(fmt::format("gradcheck {}", file), dir).exit_code == 1);
  CHECK(run_cli(fmt::format("gradcheck {} --tolerance 0.001", file), dir).exit_code == 0);
  const auto frozen = run_cli("gradcheck --frozen head.W", dir);
  CHECK(frozen.exit_code == 0);
  CHECK(frozen.output.find("frozen") != std::string::npos);
}

TEST_CASE("synth, preprocess with caching, run and report") {
  TinyProject p;
  const auto synth = run_cli(fmt::format("synth {} --out \"{}\"", p.config_flag(), (p.dir / "data").string()), p.dir);
  REQUIRE(synth.exit_code == 0);
  CHECK(std::filesystem::exists(p.dir / "data" / "manifest.csv"));
  CHECK(std::filesystem::exists(p.dir / "data" / "ratings.csv"));

  const auto first = run_cli(fmt::format("preprocess {}", p.config_flag()), p.dir);
  REQUIRE(first.exit_code == 0);
  CHECK(first.output.find("EDA        39x128  (24 recordings)") != std::string::npos);
  CHECK(first.output.find("39x512") != std::string::npos);
  CHECK(first.output.find("19x200") != std::string::npos);
  CHECK(first.output.find("computed 72, cache hits 0") != std::string::npos);
  const auto second = run_cli(fmt::format("preprocess {}", p.config_flag()), p.dir);
  CHECK(second.output.find("computed 0, cache hits 72") != std::string::npos);

  const auto env_cache = p.dir / "env_cache";
  const auto third = run_cli(fmt::format("preprocess {}", p.config_flag()), p.dir,
                             fmt::format("EMOMSASE_CACHE=\"{}\"", env_cache.string()));
  CHECK(third.output.find("computed 72, cache hits 0") != std::string::npos);
  CHECK(std::filesystem::exists(env_cache));

  const auto out = p.dir / "out";
  const auto run = run_cli(fmt::format("run {} --seed 3 --out \"{}\"", p.config_flag(), out.string()), p.dir);
  INFO(run.output);
  REQUIRE(run.exit_code == 0);
  const auto csv = testing::read_text(out / "results.csv");
  CHECK(csv.rfind("combination,label_case,metric,value\n", 0) == 0);
  CHECK(csv.find("Peripheral+Trunk+Head/emomsase/modality,general,accuracy,") != std::string::npos);
  CHECK(std::filesystem::exists(out / "results.json"));
  CHECK(std::filesystem::exists(out / "logs" / "fold0_model0.csv"));
  const auto resolved = nlohmann::json::parse(testing::read_text(out / "config.json"));
  CHECK(resolved["seed"] == 3);
  CHECK(resolved["config_hash"].get<std::string>().size() == 64);

  const auto report = run_cli(fmt::format("report --out \"{}\"", out.string()), p.dir);
  CHECK(report.exit_code == 0);
  CHECK(report.output.find("Peripheral+Trunk+Head/emomsase/modality") != std::string::npos);
}

TEST_CASE("a configured channel missing from the dataset is a runtime error") {
  TinyProject p;
  REQUIRE(run_cli(fmt::format("synth {} --out \"{}\"", p.config_flag(), (p.dir / "data").string()), p.dir).exit_code ==
          0);
  testing::write_text(p.dir / "ecg.json",
                      nlohmann::json{{"data_dir", (p.dir / "data").string()},
                                     {"cache_dir", (p.dir / "cache").string()},
                                     {"channels", {{"Trunk", {"ECG1"}}}},
                                     {"domains", {"Trunk"}}}
                          .dump());
  const auto r = run_cli(fmt::format("preprocess --config \"{}\"", (p.dir / "ecg.json").string()), p.dir);
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("MissingChannel") != std::string::npos);
}

}  // TEST_SUITE
