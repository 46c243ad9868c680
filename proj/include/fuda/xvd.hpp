#pragma once

// Cross-domain visual dispersal: confident targets blended with their nearest
// labeled-source matches, target-dominant.

#include "fuda/data.hpp"
#include "fuda/model.hpp"
#include "fuda/random.hpp"
#include "fuda/selection.hpp"

#include <iosfwd>
#include <vector>

namespace fuda {

enum class Origin { labeled_source, unlabeled_source, target };
enum class LabelKind { ground_truth, pseudo };

std::string to_string(Origin origin);
std::string to_string(LabelKind kind);

/// One constituent of a mixed sample. `index` is a row of the set named by `origin`.
struct MixMember {
  Origin origin = Origin::target;
  Index index = 0;
  int label = 0;
  LabelKind label_kind = LabelKind::pseudo;
};

/// input = beta * first + (1 - beta) * second, and likewise for the one-hot labels.
struct MixedSample {
  Vector input;
  Vector soft_label;
  double beta = 0.5;
  MixMember first;
  MixMember second;
};

struct MixedSet {
  std::vector<MixedSample> samples;

  Index size() const { return static_cast<Index>(samples.size()); }
  bool empty() const { return samples.empty(); }
  Matrix inputs() const;
  Matrix soft_labels() const;
};

using CrossBlendSet = MixedSet;

/// Which half of the unit interval the mixing weight is reflected into.
enum class BetaSide { dominant_first, dominant_second, unconstrained };

/// dominant_first -> max(b, 1 - b); dominant_second -> min(b, 1 - b).
double reflect_weight(double raw, BetaSide side);

/// Draw b ~ Beta(alpha, alpha) and reflect it onto the requested side.
double sample_mix_weight(double alpha, BetaSide side, Rng& rng);

MixedSample mix_pair(const Eigen::Ref<const Vector>& first_input, const MixMember& first,
                     const Eigen::Ref<const Vector>& second_input, const MixMember& second,
                     double beta, int num_classes);

/// Blend confident target i with its matched labeled source; the three lists
/// are index-aligned. Pseudo labels are class indices.
CrossBlendSet build_cross_blend(const UnlabeledSet& targets, const IndexList& confident_targets,
                                const LabeledSet& labeled_source, const IndexList& matched_sources,
                                const std::vector<int>& target_pseudo_labels, double alpha,
                                Rng& rng);

struct XvdPlan {
  ScoreMatrix scores;
  IndexList matches;    ///< nearest labeled-source row for every target
  IndexList confident;  ///< selected target rows, ascending entropy
  CrossBlendSet set;
};

/// Score matrix -> nearest match -> confident targets -> cross blend.
XvdPlan xvd_epoch_plan(const EpochSnapshot& snapshot, const EntropyTable& entropies,
                       const LabeledSet& labeled_source, const UnlabeledSet& targets,
                       double confident_ratio, double alpha, Rng& rng);

/// Ablation comparator: every target blended with a uniformly random source
/// sample (labeled or not) and an unconstrained weight. Unlabeled source
/// members carry argmax pseudo labels from the snapshot.
CrossBlendSet build_plain_cross_mix(const EpochSnapshot& snapshot, const LabeledSet& labeled_source,
                                    const UnlabeledSet& unlabeled_source, const UnlabeledSet& targets,
                                    double alpha, Rng& rng);

/// Argmax class of a probability row; ties go to the lowest index.
int argmax_class(const Eigen::Ref<const RowVector>& row);
std::vector<int> argmax_classes(const Eigen::Ref<const Matrix>& rows);

/// One line per pair: first/second provenance and beta.
void dump_mixed_set(std::ostream& out, const MixedSet& set);

}  // namespace fuda
