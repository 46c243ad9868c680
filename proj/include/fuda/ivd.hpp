#pragma once

// Intra-domain visual dispersal: hard targets mixed with easy partners,
// hard-dominant.

#include "fuda/xvd.hpp"

namespace fuda {

/// T^E = labeled source plus easy targets; T^H = hard targets. Outliers are dropped.
struct GuidanceSets {
  std::vector<MixMember> easy;
  std::vector<MixMember> hard;
};

using IntraMixSet = MixedSet;

/// Easy members carry ground truth (labeled source) or argmax pseudo labels
/// (easy targets); hard members carry argmax pseudo labels.
GuidanceSets build_guidance_sets(const LabeledSet& labeled_source, const DifficultySplit& split,
                                 const Eigen::Ref<const Matrix>& target_predictions);

/// One uniformly drawn easy partner per hard sample; the weight on the easy
/// partner is at most 0.5. Mixed samples store the easy partner as `first`.
IntraMixSet build_intra_mix(const GuidanceSets& sets, const LabeledSet& labeled_source,
                            const UnlabeledSet& targets, double alpha, Rng& rng);

struct IvdPlan {
  DifficultySplit split;
  GuidanceSets guidance;
  IntraMixSet set;
};

/// Difficulty split -> guidance sets -> intra mix.
IvdPlan ivd_epoch_plan(const EpochSnapshot& snapshot, const EntropyTable& entropies,
                       const LabeledSet& labeled_source, const UnlabeledSet& targets,
                       double easy_ratio, double hard_ratio, double alpha, Rng& rng);

/// Ablation comparator: every target mixed with a uniformly random target and
/// an unconstrained weight, pseudo labels on both sides.
IntraMixSet build_plain_intra_mix(const EpochSnapshot& snapshot, const UnlabeledSet& targets,
                                  int num_classes, double alpha, Rng& rng);

}  // namespace fuda
