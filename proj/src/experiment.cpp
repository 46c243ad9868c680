#include "fuda/experiment.hpp"

#include "fuda/selection.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace fuda {

namespace {

const char* const kVariantNames[] = {"baseline", "xvd_only", "ivd_only", "full", "plain_mixup"};

}  // namespace

std::string to_string(Variant variant) { return kVariantNames[static_cast<int>(variant)]; }

Variant parse_variant(std::string_view name) {
  for (Variant v : all_variants())
    if (name == kVariantNames[static_cast<int>(v)]) return v;
  throw Error("unknown variant '" + std::string(name) +
              "' (expected baseline, xvd_only, ivd_only, full or plain_mixup)");
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> variants{Variant::baseline, Variant::xvd_only, Variant::ivd_only,
                                             Variant::full, Variant::plain_mixup};
  return variants;
}

HyperParams apply_variant(HyperParams hp, Variant variant) {
  switch (variant) {
    case Variant::baseline:
      hp.lambda_xvd = 0.0;
      hp.lambda_ivd = 0.0;
      break;
    case Variant::xvd_only:
      hp.lambda_ivd = 0.0;
      break;
    case Variant::ivd_only:
      hp.lambda_xvd = 0.0;
      break;
    case Variant::full:
      break;
    case Variant::plain_mixup:
      hp.mixing = MixingStrategy::plain;
      break;
  }
  return hp;
}

// ---------------------------------------------------------------------------

void DatasetConfig::validate() const {
  if (source == DatasetSource::synthetic) {
    synthetic.validate();
  } else {
    if (source_path.empty() || target_path.empty())
      throw Error("dataset: table source needs both source_path and target_path");
    if (num_classes < 2) throw Error("dataset: num_classes must be at least 2");
  }
  if (const auto* shots = std::get_if<ShotsPerClass>(&split); shots && shots->shots < 1)
    throw Error("dataset: shots must be positive");
  if (const auto* frac = std::get_if<LabelFraction>(&split);
      frac && !(frac->fraction > 0.0 && frac->fraction <= 1.0))
    throw Error("dataset: label fraction must lie in (0, 1]");
}

int DatasetConfig::classes() const {
  return source == DatasetSource::synthetic ? synthetic.num_classes : num_classes;
}

PreparedData prepare_data(const DatasetConfig& config, std::uint64_t seed) {
  config.validate();
  DomainDataset source, target;
  if (config.source == DatasetSource::synthetic) {
    std::tie(source, target) = make_synthetic_shift(config.synthetic, seed);
  } else {
    source = load_dataset_table(config.source_path, "source", config.num_classes, DomainTag::source);
    target = load_dataset_table(config.target_path, "target", config.num_classes, DomainTag::target);
    if (source.input_dim() != target.input_dim())
      throw Error("dataset: source and target feature widths differ");
  }
  FewShotSplit split;
  if (!config.split_file.empty()) {
    split = load_split_file(config.split_file, SampleResolver::by_index(source.size()));
  } else {
    split = draw_few_shot_split(source, config.split, seed);
  }
  PreparedData data;
  std::tie(data.labeled_source, data.unlabeled_source) = apply_split(source, split);
  data.target = std::move(target);
  return data;
}

ModelConfig resolve_model(ModelConfig model, const PreparedData& data) {
  model.input_dim = data.target.input_dim();
  model.num_classes = data.target.num_classes();
  model.validate();
  return model;
}

// ---------------------------------------------------------------------------

Evaluator::Evaluator(std::vector<int> target_labels, std::vector<int> labeled_source_labels,
                     double easy_ratio, double hard_ratio)
    : target_labels_(std::move(target_labels)),
      source_labels_(std::move(labeled_source_labels)),
      easy_ratio_(easy_ratio),
      hard_ratio_(hard_ratio) {}

EpochMetrics Evaluator::evaluate(const AdaptationModel& model, const Matrix& target_inputs,
                                 const Matrix& labeled_source_inputs, int epoch,
                                 const EpochLosses& losses) {
  EpochMetrics m;
  m.epoch = epoch;
  m.losses = losses;
  const Snapshot target = model.extract_all(target_inputs);
  m.target_accuracy = target_accuracy(target.predictions, target_labels_);
  if (labeled_source_inputs.rows() > 0) {
    const Snapshot source = model.extract_all(labeled_source_inputs);
    const IndexList matches = nearest_source_match(compute_score_matrix(target.features, source.features, epoch));
    m.matching_accuracy = matching_accuracy(matches, target_labels_, source_labels_);
  }
  const DifficultySplit split =
      split_by_difficulty(compute_entropy_table(target.predictions, epoch), easy_ratio_, hard_ratio_);
  if (!frozen_) frozen_ = split;
  m.buckets = bucket_accuracy(split, target.predictions, target_labels_);
  m.frozen_buckets = bucket_accuracy(*frozen_, target.predictions, target_labels_);
  return m;
}

// ---------------------------------------------------------------------------

std::vector<EpochMetrics> run_experiment(const ExperimentConfig& config, Variant variant,
                                         std::uint64_t seed, const PreparedData& data,
                                         const EpochObserver& observer) {
  HyperParams hp = apply_variant(config.hp, variant);
  hp.seed = seed;
  hp.validate();
  const ModelConfig model = resolve_model(config.model, data);
  const LabeledSet labeled = data.labeled_source.labeled_set();

  Trainer trainer(model, hp, labeled, data.unlabeled_source.unlabeled_set(),
                  data.target.unlabeled_set());
  Evaluator evaluator(data.target.require_labels(), labeled.labels, hp.easy_ratio, hp.hard_ratio);

  std::vector<EpochMetrics> history;
  for (int e = 0; e < hp.epochs; ++e) {
    const EpochLosses losses = trainer.train_epoch();
    history.push_back(evaluator.evaluate(trainer.state().model, data.target.inputs(), labeled.inputs,
                                         trainer.state().epoch, losses));
    if (observer) observer(history.back(), trainer);
  }
  return history;
}

std::vector<EpochMetrics> run_experiment(const ExperimentConfig& config, Variant variant,
                                         std::uint64_t seed, const EpochObserver& observer) {
  return run_experiment(config, variant, seed, prepare_data(config.dataset, seed), observer);
}

// ---------------------------------------------------------------------------

AblationRow summarize_row(std::string variant, std::vector<double> accuracies) {
  AblationRow row;
  row.variant = std::move(variant);
  row.accuracies = std::move(accuracies);
  const auto n = static_cast<double>(row.accuracies.size());
  if (row.accuracies.empty()) return row;
  row.mean = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) / n;
  if (row.accuracies.size() > 1) {
    double ss = 0.0;
    for (double a : row.accuracies) ss += (a - row.mean) * (a - row.mean);
    row.stddev = std::sqrt(ss / (n - 1.0));
  }
  return row;
}

const AblationRow& AblationTable::row(std::string_view variant) const {
  for (const AblationRow& r : rows)
    if (r.variant == variant) return r;
  throw Error("ablation table has no row '" + std::string(variant) + "'");
}

std::string AblationTable::to_text() const {
  std::size_t width = 7;
  for (const AblationRow& r : rows) width = std::max(width, r.variant.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "variant" << "  " << std::right
      << std::setw(5) << "seeds" << "  " << std::setw(16) << "target acc (%)" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const AblationRow& r : rows) {
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << 100.0 * r.mean << " +- " << 100.0 * r.stddev;
    out << std::left << std::setw(static_cast<int>(width)) << r.variant << "  " << std::right
        << std::setw(5) << r.accuracies.size() << "  " << std::setw(16) << cell.str() << '\n';
  }
  return out.str();
}

std::string AblationTable::to_markdown() const {
  std::ostringstream out;
  out << "| variant | seeds | mean | std |\n|---|---:|---:|---:|\n" << std::setprecision(17);
  for (const AblationRow& r : rows)
    out << "| " << r.variant << " | " << r.accuracies.size() << " | " << r.mean << " | " << r.stddev
        << " |\n";
  return out.str();
}

std::string AblationTable::to_csv() const {
  std::ostringstream out;
  out << "variant,n,mean,std\n" << std::setprecision(17);
  for (const AblationRow& r : rows)
    out << r.variant << ',' << r.accuracies.size() << ',' << r.mean << ',' << r.stddev << '\n';
  return out.str();
}

AblationTable run_ablation(const ExperimentConfig& config, const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds) {
  std::vector<Variant> parsed;
  for (const std::string& name : variants) parsed.push_back(parse_variant(name));
  if (seeds.empty()) throw Error("run_ablation: no seeds given");

  std::vector<std::vector<double>> acc(parsed.size());
  for (std::uint64_t seed : seeds) {
    const PreparedData data = prepare_data(config.dataset, seed);
    for (std::size_t v = 0; v < parsed.size(); ++v) {
      const std::vector<EpochMetrics> history = run_experiment(config, parsed[v], seed, data);
      if (history.empty()) throw Error("run_ablation: zero epochs leave nothing to compare");
      acc[v].push_back(history.back().target_accuracy);
    }
  }
  AblationTable table;
  for (std::size_t v = 0; v < parsed.size(); ++v)
    table.rows.push_back(summarize_row(variants[v], std::move(acc[v])));
  return table;
}

}  // namespace fuda
