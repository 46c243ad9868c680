#include "fuda/runner.hpp"

#include "fuda/plot.hpp"
#include "fuda/selection.hpp"

#include <json.hpp>

#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace fuda {

namespace {

using nlohmann::ordered_json;

ordered_json optional_number(const std::optional<double>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

std::string epoch_tag(int epoch) {
  std::ostringstream o;
  o << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return o.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

template <typename Dump, typename Value>
void dump_to(const fs::path& path, Dump dump, const Value& value) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  dump(out, value);
}

fs::path unique_run_dir(const fs::path& root, const std::string& id) {
  fs::path dir = root / id;
  for (int k = 1; fs::exists(dir); ++k) dir = root / (id + "-" + std::to_string(k));
  return dir;
}

void write_debug_dumps(const fs::path& run_dir, const Trainer& trainer, int epoch) {
  const fs::path dir = run_dir / "debug" / epoch_tag(epoch);
  fs::create_directories(dir);
  const TrainState& s = trainer.state();
  dump_to(dir / "entropies.csv", dump_entropy_table, s.entropies);
  if (s.scores.distances.size() > 0) dump_to(dir / "scores.csv", dump_score_matrix, s.scores);
  if (s.split) dump_to(dir / "split.csv", dump_split, *s.split);
  if (s.cross_blend) dump_to(dir / "xvd_pairs.csv", dump_mixed_set, *s.cross_blend);
  if (s.intra_mix) dump_to(dir / "ivd_pairs.csv", dump_mixed_set, *s.intra_mix);
}

void export_final_embeddings(const fs::path& path, const Trainer& trainer, const PreparedData& data) {
  const AdaptationModel& model = trainer.state().model;
  const Matrix source_features = model.extract_all(trainer.all_source_inputs()).features;
  const Matrix target_features = model.extract_all(data.target.inputs()).features;
  EmbeddingTable table;
  table.features.resize(source_features.rows() + target_features.rows(), source_features.cols());
  table.features << source_features, target_features;
  // Source rows follow the trainer's order: labeled then unlabeled.
  for (const DomainDataset* part : {&data.labeled_source, &data.unlabeled_source}) {
    for (Index i = 0; i < part->size(); ++i) {
      table.ids.push_back(part->ids()[static_cast<std::size_t>(i)]);
      table.domains.push_back(DomainTag::source);
      table.labels.push_back(part->labels()[static_cast<std::size_t>(i)]);
    }
  }
  for (Index i = 0; i < data.target.size(); ++i) {
    table.ids.push_back(data.target.ids()[static_cast<std::size_t>(i)]);
    table.domains.push_back(DomainTag::target);
    table.labels.push_back(data.target.labels()[static_cast<std::size_t>(i)]);
  }
  export_embeddings(path.string(), table);
}

}  // namespace

std::string make_run_id(const std::string& variant, std::uint64_t seed,
                        std::chrono::system_clock::time_point when) {
  const std::time_t t = std::chrono::system_clock::to_time_t(when);
  std::tm utc{};
  gmtime_r(&t, &utc);
  std::ostringstream id;
  id << variant << '_' << seed << '_' << std::put_time(&utc, "%Y%m%dT%H%M%SZ");
  return id.str();
}

std::string metrics_json_line(const EpochMetrics& m) {
  ordered_json j;
  j["epoch"] = m.epoch;
  j["target_acc"] = m.target_accuracy;
  j["matching_acc"] = optional_number(m.matching_accuracy);
  j["bucket_acc_easy"] = optional_number(m.buckets.easy);
  j["bucket_acc_hard"] = optional_number(m.buckets.hard);
  j["bucket_acc_outlier"] = optional_number(m.buckets.outlier);
  j["loss_cls"] = m.losses.cls;
  j["loss_mi"] = m.losses.mi;
  j["loss_self"] = m.losses.self;
  j["loss_xvd"] = m.losses.xvd;
  j["loss_ivd"] = m.losses.ivd;
  j["loss_total"] = m.losses.total;
  j["frozen_bucket_acc_easy"] = optional_number(m.frozen_buckets.easy);
  j["frozen_bucket_acc_hard"] = optional_number(m.frozen_buckets.hard);
  j["frozen_bucket_acc_outlier"] = optional_number(m.frozen_buckets.outlier);
  j["bucket_count_easy"] = m.buckets.easy_count;
  j["bucket_count_hard"] = m.buckets.hard_count;
  j["bucket_count_outlier"] = m.buckets.outlier_count;
  return j.dump();
}

RunResult execute_run(RunConfig config) {
  config.validate();
  const Variant variant = parse_variant(config.variant);
  const std::uint64_t seed = config.seeds.front();
  config.seeds = {seed};

  // Everything that can fail on bad input happens before the run directory exists.
  const PreparedData data = prepare_data(config.experiment.dataset, seed);
  resolve_model(config.experiment.model, data);

  const fs::path root = config.resolved_output_dir();
  fs::create_directories(root);
  const fs::path dir = unique_run_dir(root, make_run_id(config.variant, seed, std::chrono::system_clock::now()));
  fs::create_directories(dir);
  const std::string resolved = render_run_config(config);
  write_text(dir / "config.resolved", resolved);
  const std::string fingerprint = hex(fnv1a(resolved));

  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw Error("cannot write " + (dir / "metrics.jsonl").string());

  const fs::path ckpt_dir = dir / "checkpoints";
  fs::create_directories(ckpt_dir);

  RunResult result;
  result.run_dir = dir.string();
  const int epochs = config.experiment.hp.epochs;
  result.metrics = run_experiment(
      config.experiment, variant, seed, data, [&](const EpochMetrics& m, const Trainer& trainer) {
        metrics << metrics_json_line(m) << '\n';
        metrics.flush();
        if (config.debug_dumps) write_debug_dumps(dir, trainer, m.epoch);
        const bool interval = config.checkpoint_every > 0 && m.epoch % config.checkpoint_every == 0;
        if (interval || m.epoch == epochs)
          trainer.state().model.save((ckpt_dir / (epoch_tag(m.epoch) + ".ckpt")).string(), fingerprint);
        if (config.debug_dumps && m.epoch == epochs)
          export_final_embeddings(dir / "embeddings.csv", trainer, data);
      });
  return result;
}

AblationTable execute_ablation(const RunConfig& config, const std::vector<std::string>& variants,
                               const std::vector<std::uint64_t>& seeds, std::vector<RunResult>* runs) {
  for (const std::string& v : variants) parse_variant(v);
  if (seeds.empty()) throw Error("ablate: no seeds given");
  std::map<std::string, std::vector<double>> acc;
  for (std::uint64_t seed : seeds) {
    for (const std::string& v : variants) {
      RunConfig one = config;
      one.variant = v;
      one.seeds = {seed};
      RunResult r = execute_run(one);
      if (r.metrics.empty()) throw Error("ablate: zero epochs leave nothing to compare");
      acc[v].push_back(r.metrics.back().target_accuracy);
      if (runs) runs->push_back(std::move(r));
    }
  }
  AblationTable table;
  for (const std::string& v : variants) table.rows.push_back(summarize_row(v, acc[v]));
  return table;
}

ReportFormat parse_report_format(const std::string& name) {
  if (name == "text") return ReportFormat::text;
  if (name == "md") return ReportFormat::md;
  if (name == "csv") return ReportFormat::csv;
  throw Error("unknown report format '" + name + "' (expected text, md or csv)");
}

std::string format_table(const AblationTable& table, ReportFormat format) {
  switch (format) {
    case ReportFormat::text: return table.to_text();
    case ReportFormat::md: return table.to_markdown();
    case ReportFormat::csv: return table.to_csv();
  }
  return {};
}

// ---------------------------------------------------------------------------

namespace {

struct LoadedRun {
  std::string variant;
  std::vector<ordered_json> lines;
};

double field(const ordered_json& line, const char* key) {
  const auto it = line.find(key);
  if (it == line.end() || it->is_null()) return std::numeric_limits<double>::quiet_NaN();
  return it->get<double>();
}

// Per-variant mean over runs, epoch by epoch, ignoring nulls.
Series mean_curve(const std::string& name, const std::vector<const LoadedRun*>& runs, const char* key) {
  std::map<int, std::pair<double, int>> sums;
  for (const LoadedRun* run : runs)
    for (const ordered_json& line : run->lines) {
      const double v = field(line, key);
      auto& [sum, count] = sums[line.at("epoch").get<int>()];
      if (std::isfinite(v)) sum += v, ++count;
    }
  Series s{name, {}, {}};
  for (const auto& [epoch, sc] : sums) {
    s.x.push_back(epoch);
    s.y.push_back(sc.second > 0 ? sc.first / sc.second : std::numeric_limits<double>::quiet_NaN());
  }
  return s;
}

}  // namespace

ReportResult build_report(const std::vector<std::string>& run_dirs, ReportFormat format,
                          const std::string& out_dir) {
  ReportResult result;
  std::vector<std::string> order;
  std::map<std::string, std::vector<LoadedRun>> by_variant;

  for (const std::string& d : run_dirs) {
    const fs::path dir(d);
    const fs::path metrics_path = dir / "metrics.jsonl";
    if (!fs::exists(metrics_path)) {
      result.warnings.push_back(d + ": no metrics.jsonl, skipped");
      continue;
    }
    LoadedRun run;
    try {
      run.variant = load_run_config((dir / "config.resolved").string()).variant;
    } catch (const std::exception& e) {
      result.warnings.push_back(d + ": unreadable config.resolved (" + e.what() + "), skipped");
      continue;
    }
    std::ifstream in(metrics_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        run.lines.push_back(ordered_json::parse(line));
      } catch (const std::exception&) {
        result.warnings.push_back(d + ": malformed metrics line ignored");
      }
    }
    if (run.lines.empty()) {
      result.warnings.push_back(d + ": metrics.jsonl has no epochs, skipped");
      continue;
    }
    if (!by_variant.count(run.variant)) order.push_back(run.variant);
    by_variant[run.variant].push_back(std::move(run));
  }

  for (const std::string& v : order) {
    std::vector<double> acc;
    for (const LoadedRun& r : by_variant[v]) acc.push_back(field(r.lines.back(), "target_acc"));
    result.table.rows.push_back(summarize_row(v, std::move(acc)));
  }

  fs::create_directories(out_dir);
  const std::string ext = format == ReportFormat::csv ? "csv" : format == ReportFormat::md ? "md" : "txt";
  write_text(fs::path(out_dir) / ("ablation." + ext), format_table(result.table, format));

  Chart loss{"Total loss", "epoch", "loss", {}};
  Chart components{"Component losses", "epoch", "loss", {}};
  Chart matching{"Matching accuracy", "epoch", "accuracy", {}};
  Chart buckets{"Bucket accuracy (re-evaluated each epoch)", "epoch", "accuracy", {}};
  Chart frozen{"Bucket accuracy (groups fixed at first epoch)", "epoch", "accuracy", {}};
  for (const std::string& v : order) {
    std::vector<const LoadedRun*> runs;
    for (const LoadedRun& r : by_variant[v]) runs.push_back(&r);
    loss.series.push_back(mean_curve(v + " total", runs, "loss_total"));
    for (const char* key : {"loss_cls", "loss_mi", "loss_self", "loss_xvd", "loss_ivd"})
      components.series.push_back(mean_curve(v + " " + (key + 5), runs, key));
    matching.series.push_back(mean_curve(v, runs, "matching_acc"));
    for (const char* bucket : {"easy", "hard", "outlier"}) {
      buckets.series.push_back(mean_curve(v + " " + bucket, runs, (std::string("bucket_acc_") + bucket).c_str()));
      frozen.series.push_back(
          mean_curve(v + " " + bucket, runs, (std::string("frozen_bucket_acc_") + bucket).c_str()));
    }
  }
  for (const auto& [name, chart] : {std::pair<const char*, const Chart*>{"loss_curves.svg", &loss},
                                    {"loss_components.svg", &components},
                                    {"matching_accuracy.svg", &matching},
                                    {"bucket_accuracy.svg", &buckets},
                                    {"frozen_bucket_accuracy.svg", &frozen}}) {
    const fs::path path = fs::path(out_dir) / name;
    write_svg(path.string(), *chart);
    result.plots.push_back(path.string());
  }
  return result;
}

}  // namespace fuda
