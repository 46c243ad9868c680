#include "fuda/config.hpp"
#include "fuda/runner.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fuda;
namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(# tiny synthetic run
[dataset]
source = synthetic
num_classes = 3
samples_per_class = 12
theta = 0.5

[split]
mode = shots
shots = 1

[model]
hidden = 6
feature_dim = 4

[trainer]
epochs = 2
batch_size = 16
kmeans_restarts = 1

[run]
variant = full
seeds = 3
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fuda_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig parse(const std::string& text, const std::vector<std::string>& overrides = {}) {
  std::istringstream in(text);
  return parse_run_config(in, overrides);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("config parsing and overrides") {
  const RunConfig c = parse(kConfig, {"trainer.lambda_ivd=0.5", "run.seeds=1,2"});
  CHECK(c.experiment.dataset.synthetic.num_classes == 3);
  CHECK(c.experiment.model.hidden == std::vector<Index>{6});
  CHECK(c.experiment.hp.lambda_ivd == 0.5);
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(c.overrides.size() == 2);

  CHECK_THROWS_WITH_AS(parse(std::string(kConfig) + "bogus = 1\n"), doctest::Contains("run.bogus"), Error);
  CHECK_THROWS_WITH_AS(parse(kConfig, {"trainer.nope=1"}), doctest::Contains("trainer.nope"), Error);
  CHECK_THROWS_AS(parse(kConfig, {"no_equals"}), Error);
  CHECK_THROWS_WITH_AS(parse(kConfig, {"trainer.epochs=ten"}), doctest::Contains("integer"), Error);
  CHECK_THROWS_AS(parse(kConfig, {"model.activation=gelu"}), Error);
  CHECK_THROWS_AS(parse("epochs = 3\n"), Error);
  CHECK_THROWS_AS(parse(kConfig, {"trainer.easy_ratio=0.9"}), Error);  // easy + hard > 1
}

TEST_CASE("resolved config round trips") {
  const RunConfig c = parse(kConfig, {"trainer.alpha=0.3", "dataset.translation=0.1,0.2"});
  const std::string text = render_run_config(c);
  CHECK(text.find("# override: trainer.alpha=0.3") != std::string::npos);
  CHECK(text.find("alpha = 0.3\n") != std::string::npos);
  const RunConfig back = parse(text);
  const std::string again = render_run_config(back);
  CHECK(again.substr(again.find("\n[")) == text.substr(text.find("\n[")));
  CHECK(back.experiment.hp.alpha == 0.3);
  CHECK(back.experiment.dataset.synthetic.translation == std::vector<double>{0.1, 0.2});
}

TEST_CASE("run id format") {
  const auto t = std::chrono::system_clock::time_point(std::chrono::seconds(1700000000));
  CHECK(make_run_id("full", 4, t) == "full_4_20231114T221320Z");
}

TEST_CASE("runs write config, metrics and checkpoints; zero epochs writes no metrics") {
  const fs::path out = scratch("run");
  RunConfig c = parse(kConfig, {"run.output_dir=" + out.string(), "run.checkpoint_every=1"});
  const RunResult r = execute_run(c);
  const fs::path dir(r.run_dir);
  CHECK(fs::exists(dir / "config.resolved"));
  CHECK(fs::exists(dir / "checkpoints" / "epoch_0001.ckpt"));
  CHECK(fs::exists(dir / "checkpoints" / "epoch_0002.ckpt"));
  const auto lines = lines_of(slurp(dir / "metrics.jsonl"));
  REQUIRE(lines.size() == 2);
  const auto j = nlohmann::json::parse(lines[1]);
  CHECK(j["epoch"] == 2);
  for (const char* key : {"target_acc", "matching_acc", "bucket_acc_easy", "bucket_acc_hard",
                          "bucket_acc_outlier", "loss_cls", "loss_mi", "loss_self", "loss_xvd",
                          "loss_ivd", "loss_total"})
    CHECK(j.contains(key));

  RunConfig zero = parse(kConfig, {"run.output_dir=" + out.string(), "trainer.epochs=0"});
  const RunResult z = execute_run(zero);
  CHECK(z.run_dir != r.run_dir);
  CHECK(slurp(fs::path(z.run_dir) / "metrics.jsonl").empty());
}

TEST_CASE("baseline logs zero dispersal losses") {
  const fs::path out = scratch("baseline");
  const RunResult r = execute_run(parse(kConfig, {"run.output_dir=" + out.string(), "run.variant=baseline"}));
  for (const std::string& line : lines_of(slurp(fs::path(r.run_dir) / "metrics.jsonl"))) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j["loss_xvd"] == 0.0);
    CHECK(j["loss_ivd"] == 0.0);
  }
}

TEST_CASE("rerunning a config reproduces metrics byte for byte") {
  const fs::path out = scratch("rerun");
  const RunConfig c = parse(kConfig, {"run.output_dir=" + out.string()});
  const RunResult a = execute_run(c);
  const RunResult b = execute_run(c);
  CHECK(a.run_dir != b.run_dir);
  CHECK(slurp(fs::path(a.run_dir) / "metrics.jsonl") == slurp(fs::path(b.run_dir) / "metrics.jsonl"));
}

TEST_CASE("debug dumps") {
  const fs::path out = scratch("debug");
  const RunResult r = execute_run(parse(kConfig, {"run.output_dir=" + out.string(), "run.debug_dumps=true"}));
  const fs::path d = fs::path(r.run_dir) / "debug" / "epoch_0002";
  for (const char* f : {"entropies.csv", "scores.csv", "split.csv", "xvd_pairs.csv", "ivd_pairs.csv"})
    CHECK(fs::exists(d / f));
  const EmbeddingTable emb = read_embeddings((fs::path(r.run_dir) / "embeddings.csv").string());
  CHECK(emb.features.rows() == 72);  // all source rows plus all target rows
}

TEST_CASE("report: formats agree, missing metrics are warned about") {
  const fs::path out = scratch("report");
  std::vector<RunResult> runs;
  execute_ablation(parse(kConfig, {"run.output_dir=" + out.string()}), {"baseline", "full"}, {0, 1}, &runs);
  REQUIRE(runs.size() == 4);
  std::vector<std::string> dirs;
  for (const RunResult& r : runs) dirs.push_back(r.run_dir);
  const fs::path broken = out / "broken";
  fs::create_directories(broken);
  dirs.push_back(broken.string());

  const ReportResult md = build_report(dirs, ReportFormat::md, (out / "md").string());
  const ReportResult csv = build_report(dirs, ReportFormat::csv, (out / "csv").string());
  CHECK(md.warnings.size() == 1);
  CHECK(md.warnings.front().find("broken") != std::string::npos);
  REQUIRE(md.table.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(md.table.rows[i].variant == csv.table.rows[i].variant);
    CHECK(md.table.rows[i].mean == csv.table.rows[i].mean);
    CHECK(md.table.rows[i].stddev == csv.table.rows[i].stddev);
  }
  CHECK(fs::exists(out / "md" / "ablation.md"));
  CHECK(fs::exists(out / "csv" / "ablation.csv"));
  CHECK(fs::exists(out / "md" / "loss_curves.svg"));
  CHECK(slurp(out / "csv" / "ablation.csv") == format_table(csv.table, ReportFormat::csv));
  // the report reads runs without modifying them
  CHECK(!fs::exists(fs::path(runs[0].run_dir) / "ablation.md"));
  CHECK_THROWS_AS(parse_report_format("pdf"), Error);
}

TEST_CASE("command line front end") {
  const fs::path dir = scratch("exe");
  {
    std::ofstream cfg(dir / "c.cfg");
    cfg << kConfig;
  }
  const std::string exe = FUDA_CLI_PATH;
  auto sh = [&](const std::string& args) {
    return std::system((exe + " " + args + " > " + (dir / "log.txt").string() + " 2>&1").c_str());
  };
  CHECK(sh("run --config " + (dir / "c.cfg").string() + " --out " + (dir / "runs").string() +
           " --set trainer.epochs=1 --variant ivd_only") == 0);
  CHECK(sh("run --config " + (dir / "c.cfg").string() + " --set trainer.bogus=1") != 0);
  CHECK(slurp(dir / "log.txt").find("error:") != std::string::npos);
  CHECK(sh("run --config " + (dir / "missing.cfg").string()) != 0);
  CHECK(sh("ablate --config " + (dir / "c.cfg").string() + " --out " + (dir / "abl").string() +
           " --variants baseline,full --seeds 0,1 --set trainer.epochs=1") == 0);
  CHECK(slurp(dir / "log.txt").find("full") != std::string::npos);
  std::string runs;
  for (const auto& e : fs::directory_iterator(dir / "abl")) runs += " " + e.path().string();
  CHECK(sh("report" + runs + " --format md --out " + (dir / "rep").string()) == 0);
  CHECK(fs::exists(dir / "rep" / "ablation.md"));
}
