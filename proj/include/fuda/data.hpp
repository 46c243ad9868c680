#pragma once

#include "fuda/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

namespace fuda {

enum class DomainTag { source, target };

std::string to_string(DomainTag tag);

struct Sample {
  Vector input;
  std::optional<int> label;
  DomainTag domain = DomainTag::source;
  Index index = 0;
};

/// Labeled rows only. This is the only form in which labels reach training code.
struct LabeledSet {
  Matrix inputs;
  std::vector<int> labels;
  IndexList ids;
  int num_classes = 0;

  Index size() const { return inputs.rows(); }
};

/// Inputs without labels; training code receives unlabeled data in this form.
struct UnlabeledSet {
  Matrix inputs;
  IndexList ids;

  Index size() const { return inputs.rows(); }
};

/// Immutable sample-major dataset. Row `i` holds the sample whose id is `ids()[i]`.
class DomainDataset {
 public:
  DomainDataset() = default;
  DomainDataset(std::string name, int num_classes, DomainTag domain, Matrix inputs,
                std::vector<std::optional<int>> labels, IndexList ids = {});

  const std::string& name() const { return name_; }
  int num_classes() const { return num_classes_; }
  DomainTag domain() const { return domain_; }
  Index size() const { return inputs_.rows(); }
  Index input_dim() const { return inputs_.cols(); }
  bool empty() const { return size() == 0; }

  const Matrix& inputs() const { return inputs_; }
  const std::vector<std::optional<int>>& labels() const { return labels_; }
  const IndexList& ids() const { return ids_; }

  Sample sample(Index row) const;
  std::optional<Index> row_of(Index id) const;

  bool fully_labeled() const;
  /// Throws if any row lacks a label.
  std::vector<int> require_labels() const;
  /// Rows whose label equals `label`, in row order.
  IndexList rows_with_label(int label) const;

  DomainDataset subset(const IndexList& rows, std::string name) const;
  DomainDataset with_labels(std::vector<std::optional<int>> labels) const;
  DomainDataset without_labels(std::string name) const;

  LabeledSet labeled_set() const;
  UnlabeledSet unlabeled_set() const;

 private:
  std::string name_;
  int num_classes_ = 0;
  DomainTag domain_ = DomainTag::source;
  Matrix inputs_;
  std::vector<std::optional<int>> labels_;
  IndexList ids_;
};

// ---------------------------------------------------------------------------
// Few-shot splits

struct ShotsPerClass {
  int shots = 1;
};

/// Per-class count is max(1, floor(fraction * |class|)) when class balanced, and a
/// class with fraction * |class| < 1 is an error;
/// otherwise max(1, floor(fraction * N)) rows are drawn globally.
struct LabelFraction {
  double fraction = 0.03;
  bool class_balanced = true;
};

/// Split read from a list file; no sampling rule attached.
struct ExplicitList {};

using SplitMode = std::variant<ShotsPerClass, LabelFraction, ExplicitList>;

struct FewShotSplit {
  /// class index -> sample ids of the labeled members of that class.
  std::map<int, IndexList> labeled_indices;
  SplitMode mode = ExplicitList{};

  Index labeled_count() const;
};

FewShotSplit draw_few_shot_split(const DomainDataset& dataset, const SplitMode& mode,
                                 std::uint64_t seed);

/// Partition `dataset` into (labeled, unlabeled) according to `split`.
/// Unlabeled members have their labels stripped.
std::pair<DomainDataset, DomainDataset> apply_split(const DomainDataset& dataset,
                                                    const FewShotSplit& split);

std::pair<DomainDataset, DomainDataset> sample_few_shot(const DomainDataset& dataset,
                                                        const SplitMode& mode,
                                                        std::uint64_t seed);

/// Maps split-file identifiers to sample ids. Array datasets use the integer id
/// itself; directory-backed datasets use a relative path.
class SampleResolver {
 public:
  static SampleResolver by_index(Index count);
  static SampleResolver by_path(std::vector<std::string> relative_paths);

  /// Throws on an unknown identifier.
  Index resolve(std::string_view identifier) const;
  std::string identifier(Index id) const;

 private:
  Index count_ = 0;
  std::vector<std::string> paths_;
  std::unordered_map<std::string, Index> lookup_;
};

FewShotSplit parse_split(std::istream& in, const SampleResolver& resolver);
FewShotSplit load_split_file(const std::string& path, const SampleResolver& resolver);
void write_split(std::ostream& out, const FewShotSplit& split, const SampleResolver& resolver);
void save_split_file(const std::string& path, const FewShotSplit& split,
                     const SampleResolver& resolver);

// ---------------------------------------------------------------------------
// Synthetic domain-shift benchmark

enum class InputMode { vector, image16 };

inline constexpr Index kImageSide = 16;

struct SyntheticShiftConfig {
  int num_classes = 4;
  int samples_per_class = 200;
  int feature_dim = 2;
  /// Class means sit on a circle of this radius in the first two coordinates.
  double radius = 1.0;
  double sigma = 0.3;
  /// Rotation applied to the target in the first two coordinates, in [0, pi).
  double theta = 0.0;
  /// Empty means zero translation; otherwise length feature_dim.
  std::vector<double> translation;
  /// Extra isotropic Gaussian noise on the target.
  double noise = 0.0;
  InputMode mode = InputMode::vector;

  void validate() const;
  Index input_dim() const;
};

/// Both domains come back fully labeled; target labels are for evaluation only.
/// Target rows are transformed copies of the source draws plus independent noise.
std::pair<DomainDataset, DomainDataset> make_synthetic_shift(const SyntheticShiftConfig& config,
                                                             std::uint64_t seed);

/// Renders a point as a 16x16 single-channel blob with intensities in [0, 1].
Vector render_image16(const Eigen::Ref<const Vector>& point, double radius);

/// Reads a whitespace-delimited table, one `label f1 ... fd` row per line.
DomainDataset load_dataset_table(const std::string& path, std::string name, int num_classes,
                                 DomainTag domain);

}  // namespace fuda
