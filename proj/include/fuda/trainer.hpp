#pragma once

#include "fuda/banks.hpp"
#include "fuda/data.hpp"
#include "fuda/ivd.hpp"
#include "fuda/model.hpp"
#include "fuda/xvd.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace fuda {

enum class SelfVariant { kmeans_proto, simplified_attention };
/// `plain` swaps the confidence machinery for uniform-random pairing (ablation only).
enum class MixingStrategy { confidence, plain };
/// How often target entropies (and the plans built from them) are recomputed.
enum class RefreshCadence { epoch, iteration };

struct LossWeights {
  double mi = 1.0;
  double self = 1.0;
  double xvd = 1.0;
  double ivd = 0.1;
  double temperature = 0.1;

  void validate() const;
};

struct HyperParams {
  double alpha = 0.75;
  double lambda_mi = 1.0;
  double lambda_self = 1.0;
  double lambda_xvd = 1.0;
  double lambda_ivd = 0.1;
  double confident_ratio = 0.75;  ///< r^X_h
  double easy_ratio = 0.1;        ///< r^I_E
  double hard_ratio = 0.65;       ///< r^I_H
  double temperature = 0.1;
  double center_momentum = 0.5;
  double bank_momentum = 0.5;
  double learning_rate = 0.01;
  double momentum = 0.9;
  Index batch_size = 64;
  int epochs = 10;
  int warmup_epochs = 1;
  SelfVariant self_variant = SelfVariant::kmeans_proto;
  MixingStrategy mixing = MixingStrategy::confidence;
  RefreshCadence entropy_refresh = RefreshCadence::epoch;
  int kmeans_restarts = 4;
  std::uint64_t seed = 0;

  void validate() const;
  LossWeights weights() const;
};

/// Per-component loss values; an absent component is disabled and contributes 0.
struct ComponentLosses {
  std::optional<double> cls;
  std::optional<double> mi;
  std::optional<double> self;
  std::optional<double> xvd;
  std::optional<double> ivd;
};

/// L = L_cls + l_mi L_mi + l_self L_self + l_xvd L_xvd + l_ivd L_ivd.
/// Throws, naming the component, if an enabled component is not finite.
double total_loss(const ComponentLosses& losses, const LossWeights& weights);

/// One-hot vector at the argmax (lowest index on ties).
Vector pseudo_label(const Eigen::Ref<const RowVector>& prediction);

/// Mean component losses over the optimizer steps of one epoch.
struct EpochLosses {
  double cls = 0.0;
  double mi = 0.0;
  double self = 0.0;
  double xvd = 0.0;
  double ivd = 0.0;
  double total = 0.0;
  Index steps = 0;
};

struct TrainState {
  int epoch = 0;  ///< completed training epochs
  AdaptationModel model;
  Vector velocity;

  PrototypeBank prototypes;
  MemoryBank memory;
  Matrix attention_centers;  ///< derived from `memory` at refresh

  EpochSnapshot snapshot;
  EntropyTable entropies;
  ScoreMatrix scores;
  IndexList matches;
  std::optional<DifficultySplit> split;
  std::optional<CrossBlendSet> cross_blend;
  std::optional<IntraMixSet> intra_mix;
  bool refreshed = false;
};

/// Owns the training data and state. Target data enters only as an
/// UnlabeledSet, so no training path can read target labels.
class Trainer {
 public:
  Trainer(ModelConfig model_config, HyperParams hp, LabeledSet labeled_source,
          UnlabeledSet unlabeled_source, UnlabeledSet targets);

  const HyperParams& hyper_params() const { return hp_; }
  const TrainState& state() const { return state_; }
  TrainState& state() { return state_; }

  const LabeledSet& labeled_source() const { return labeled_source_; }
  const UnlabeledSet& unlabeled_source() const { return unlabeled_source_; }
  const UnlabeledSet& targets() const { return targets_; }
  /// Labeled then unlabeled source rows.
  const Matrix& all_source_inputs() const { return all_source_; }

  bool in_warmup() const { return state_.epoch < hp_.warmup_epochs; }

  /// Snapshot all three sets, recompute entropies and scores, update the
  /// prototype or memory bank, and rebuild the mixing sets.
  void refresh_epoch_state();

  /// One pass of composite minibatch steps. Refreshes first if needed.
  EpochLosses train_epoch();

 private:
  EpochSnapshot take_snapshot() const;
  void rebuild_plans(std::uint32_t salt);

  HyperParams hp_;
  LabeledSet labeled_source_;
  UnlabeledSet unlabeled_source_;
  UnlabeledSet targets_;
  Matrix all_source_;
  TrainState state_;
};

}  // namespace fuda
