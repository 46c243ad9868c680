// fuda: run / ablate / report front-end.
#include "fuda/runner.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

namespace {

std::string join_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot domain adaptation lab"};
  app.require_subcommand(1);

  std::string config_path, variant, out_dir;
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;

  auto* run = app.add_subcommand("run", "train one variant with one seed");
  run->add_option("--config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--variant", variant, "baseline | xvd_only | ivd_only | full | plain_mixup");
  run->add_option("--seed", seed, "seed (overrides run.seeds)");
  run->add_option("--set", sets, "section.key=value override (repeatable)");
  run->add_option("--out", out_dir, "output root (default $FUDA_OUT_DIR or ./runs)");

  std::vector<std::string> variants;
  auto* ablate = app.add_subcommand("ablate", "run variants x seeds and tabulate final target accuracy");
  ablate->add_option("--config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--variants", variants, "variants to compare")->delimiter(',');
  ablate->add_option("--seeds", seeds, "seeds")->delimiter(',');
  ablate->add_option("--set", sets, "section.key=value override (repeatable)");
  ablate->add_option("--out", out_dir, "output root (default $FUDA_OUT_DIR or ./runs)");

  std::vector<std::string> run_dirs;
  std::string format = "text", report_out = "report";
  auto* report = app.add_subcommand("report", "tabulate and plot finished runs (read-only)");
  report->add_option("runs", run_dirs, "run directories")->required();
  report->add_option("--format", format, "text | md | csv")->check(CLI::IsMember({"text", "md", "csv"}));
  report->add_option("--out", report_out, "directory for the table and plots");

  CLI11_PARSE(app, argc, argv);

  try {
    std::vector<std::string> overrides = sets;
    if (!out_dir.empty()) overrides.push_back("run.output_dir=" + out_dir);

    if (*run) {
      if (!variant.empty()) overrides.push_back("run.variant=" + variant);
      if (seed) overrides.push_back("run.seeds=" + std::to_string(*seed));
      const fuda::RunResult r = fuda::execute_run(fuda::load_run_config(config_path, overrides));
      std::cout << r.run_dir << '\n';
      if (!r.metrics.empty())
        std::cout << "final target accuracy " << r.metrics.back().target_accuracy << '\n';
    } else if (*ablate) {
      if (!seeds.empty()) overrides.push_back("run.seeds=" + join_seeds(seeds));
      const fuda::RunConfig config = fuda::load_run_config(config_path, overrides);
      if (variants.empty())
        for (fuda::Variant v : fuda::all_variants()) variants.push_back(fuda::to_string(v));
      std::vector<fuda::RunResult> runs;
      const fuda::AblationTable table = fuda::execute_ablation(config, variants, config.seeds, &runs);
      for (const auto& r : runs) std::cerr << r.run_dir << '\n';
      std::cout << table.to_text() << '\n' << table.to_csv();
    } else if (*report) {
      const fuda::ReportResult r =
          fuda::build_report(run_dirs, fuda::parse_report_format(format), report_out);
      for (const std::string& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << fuda::format_table(r.table, fuda::parse_report_format(format));
      for (const std::string& p : r.plots) std::cerr << "wrote " << p << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
