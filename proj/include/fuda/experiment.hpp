#pragma once

#include "fuda/data.hpp"
#include "fuda/eval.hpp"
#include "fuda/model.hpp"
#include "fuda/trainer.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace fuda {

enum class Variant { baseline, xvd_only, ivd_only, full, plain_mixup };

std::string to_string(Variant variant);
/// Throws on an unknown name.
Variant parse_variant(std::string_view name);
const std::vector<Variant>& all_variants();

/// Switches dispersal terms on or off; other knobs pass through unchanged.
HyperParams apply_variant(HyperParams hp, Variant variant);

enum class DatasetSource { synthetic, table };

struct DatasetConfig {
  DatasetSource source = DatasetSource::synthetic;
  SyntheticShiftConfig synthetic;
  // table datasets
  std::string source_path;
  std::string target_path;
  std::string split_file;  ///< optional; otherwise `split` is sampled
  int num_classes = 0;

  SplitMode split = ShotsPerClass{1};

  void validate() const;
  int classes() const;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;  ///< input_dim and num_classes are filled in from the data
  HyperParams hp;
};

struct PreparedData {
  DomainDataset labeled_source;
  DomainDataset unlabeled_source;  ///< labels stripped
  DomainDataset target;            ///< labels kept for evaluation only
};

PreparedData prepare_data(const DatasetConfig& config, std::uint64_t seed);

/// Completes the model config against the data (input width, class count).
ModelConfig resolve_model(ModelConfig model, const PreparedData& data);

/// Per-epoch evaluation against held-out target labels. Holds the difficulty
/// split of the first evaluated epoch so frozen-bucket curves can be compared
/// with per-epoch re-evaluated ones.
class Evaluator {
 public:
  Evaluator(std::vector<int> target_labels, std::vector<int> labeled_source_labels,
            double easy_ratio, double hard_ratio);

  EpochMetrics evaluate(const AdaptationModel& model, const Matrix& target_inputs,
                        const Matrix& labeled_source_inputs, int epoch, const EpochLosses& losses);

 private:
  std::vector<int> target_labels_;
  std::vector<int> source_labels_;
  double easy_ratio_;
  double hard_ratio_;
  std::optional<DifficultySplit> frozen_;
};

using EpochObserver = std::function<void(const EpochMetrics&, const Trainer&)>;

/// Trains `variant` for hp.epochs, evaluating after every epoch.
std::vector<EpochMetrics> run_experiment(const ExperimentConfig& config, Variant variant,
                                         std::uint64_t seed, const PreparedData& data,
                                         const EpochObserver& observer = {});
std::vector<EpochMetrics> run_experiment(const ExperimentConfig& config, Variant variant,
                                         std::uint64_t seed, const EpochObserver& observer = {});

struct AblationRow {
  std::string variant;
  std::vector<double> accuracies;  ///< final-epoch target accuracy per seed
  double mean = 0.0;
  double stddev = 0.0;  ///< sample (n-1) standard deviation; 0 for one seed
};

AblationRow summarize_row(std::string variant, std::vector<double> accuracies);

struct AblationTable {
  std::vector<AblationRow> rows;

  const AblationRow& row(std::string_view variant) const;
  /// Aligned columns, accuracies in percent.
  std::string to_text() const;
  std::string to_markdown() const;
  /// Machine-readable rows: variant,n,mean,std (fractions, full precision).
  std::string to_csv() const;
};

AblationTable run_ablation(const ExperimentConfig& config, const std::vector<std::string>& variants,
                           const std::vector<std::uint64_t>& seeds);

}  // namespace fuda
