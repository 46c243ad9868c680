#pragma once

#include "fuda/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fuda {

enum class Backbone { mlp, conv16 };
enum class Activation { relu, tanh };

struct ModelConfig {
  Backbone backbone = Backbone::mlp;
  Index input_dim = 2;
  /// Hidden widths of the perceptron body (mlp only).
  std::vector<Index> hidden{64, 64};
  /// Output channels of the two 3x3 stride-2 convolutions (conv16 only).
  std::vector<Index> conv_channels{8, 16};
  Index feature_dim = 512;
  int num_classes = 2;
  Activation activation = Activation::relu;

  void validate() const;
  /// Stable text identity of the architecture; stored in checkpoints.
  std::string fingerprint() const;
};

/// Forward results plus everything the backward pass needs.
struct ForwardPass {
  Matrix features;       ///< N x d_f, unit-norm rows
  Matrix probabilities;  ///< N x c, simplex rows
  Matrix logits;
  Vector feature_norms;  ///< row norms of the body output before normalization
  std::vector<Matrix> layer_inputs;
};

/// Feature and prediction snapshot for a whole dataset; row i is dataset row i.
struct Snapshot {
  Matrix features;
  Matrix predictions;

  Index size() const { return features.rows(); }
};

/// Snapshots of all three training sets taken at one epoch boundary.
struct EpochSnapshot {
  Snapshot labeled_source;
  Snapshot unlabeled_source;
  Snapshot target;
  int epoch = 0;
};

/// Feature extractor F followed by L2 normalization and a linear-softmax head.
/// All parameters live in one flat vector; gradients share its layout.
class AdaptationModel {
 public:
  AdaptationModel() = default;
  AdaptationModel(ModelConfig config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Index parameter_count() const { return params_.size(); }
  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  /// Parameters at [head_offset(), parameter_count()) belong to the classifier head.
  Index head_offset() const { return head_offset_; }

  ForwardPass forward(const Eigen::Ref<const Matrix>& inputs) const;

  /// Accumulates dL/dtheta into `grad` given dL/dprobabilities and/or
  /// dL/dfeatures (pass an empty matrix for an absent term).
  void backward(const ForwardPass& pass, const Matrix& d_probabilities, const Matrix& d_features,
                Eigen::Ref<Vector> grad) const;

  /// Head-only prediction from precomputed unit-norm features.
  Matrix classify_features(const Eigen::Ref<const Matrix>& features) const;

  Snapshot extract_all(const Eigen::Ref<const Matrix>& inputs, Index batch_size = 64) const;

  void save(const std::string& path, const std::string& run_fingerprint = {}) const;
  static AdaptationModel load(const std::string& path, std::string* run_fingerprint = nullptr);

 private:
  enum class LayerKind { dense, conv, activation };
  struct Layer {
    LayerKind kind;
    Index in_size = 0;
    Index out_size = 0;
    Index offset = 0;  // into params_
    // conv geometry
    Index in_channels = 0, out_channels = 0, in_side = 0, out_side = 0;
  };

  void build_layers();
  void initialize(std::uint64_t seed);

  ModelConfig config_;
  std::vector<Layer> body_;
  Index head_offset_ = 0;
  Vector params_;
};

}  // namespace fuda
