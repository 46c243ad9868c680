#include "fuda/ivd.hpp"

namespace fuda {

GuidanceSets build_guidance_sets(const LabeledSet& labeled_source, const DifficultySplit& split,
                                 const Eigen::Ref<const Matrix>& target_predictions) {
  GuidanceSets sets;
  for (Index i = 0; i < labeled_source.size(); ++i)
    sets.easy.push_back(MixMember{Origin::labeled_source, i,
                                  labeled_source.labels[static_cast<std::size_t>(i)],
                                  LabelKind::ground_truth});
  for (Index t : split.easy)
    sets.easy.push_back(
        MixMember{Origin::target, t, argmax_class(target_predictions.row(t)), LabelKind::pseudo});
  for (Index t : split.hard)
    sets.hard.push_back(
        MixMember{Origin::target, t, argmax_class(target_predictions.row(t)), LabelKind::pseudo});
  if (sets.easy.empty())
    throw Error("build_guidance_sets: easy set is empty (no labeled source and no easy targets); "
                "disable intra-domain dispersal");
  return sets;
}

IntraMixSet build_intra_mix(const GuidanceSets& sets, const LabeledSet& labeled_source,
                            const UnlabeledSet& targets, double alpha, Rng& rng) {
  if (sets.easy.empty()) throw Error("build_intra_mix: easy set is empty");
  auto input_of = [&](const MixMember& m) -> Vector {
    return m.origin == Origin::labeled_source ? Vector(labeled_source.inputs.row(m.index).transpose())
                                              : Vector(targets.inputs.row(m.index).transpose());
  };
  IntraMixSet set;
  set.samples.reserve(sets.hard.size());
  const Index easy_count = static_cast<Index>(sets.easy.size());
  for (const MixMember& hard : sets.hard) {
    const MixMember& easy = sets.easy[static_cast<std::size_t>(uniform_index(easy_count, rng))];
    const double beta = sample_mix_weight(alpha, BetaSide::dominant_second, rng);
    set.samples.push_back(
        mix_pair(input_of(easy), easy, input_of(hard), hard, beta, labeled_source.num_classes));
  }
  return set;
}

IvdPlan ivd_epoch_plan(const EpochSnapshot& snapshot, const EntropyTable& entropies,
                       const LabeledSet& labeled_source, const UnlabeledSet& targets,
                       double easy_ratio, double hard_ratio, double alpha, Rng& rng) {
  if (snapshot.target.size() != targets.size() || entropies.size() != targets.size())
    throw Error("ivd_epoch_plan: snapshot does not cover the target set");
  IvdPlan plan;
  plan.split = split_by_difficulty(entropies, easy_ratio, hard_ratio);
  plan.guidance = build_guidance_sets(labeled_source, plan.split, snapshot.target.predictions);
  plan.set = build_intra_mix(plan.guidance, labeled_source, targets, alpha, rng);
  return plan;
}

IntraMixSet build_plain_intra_mix(const EpochSnapshot& snapshot, const UnlabeledSet& targets,
                                  int num_classes, double alpha, Rng& rng) {
  IntraMixSet set;
  set.samples.reserve(static_cast<std::size_t>(targets.size()));
  const std::vector<int> pseudo = argmax_classes(snapshot.target.predictions);
  for (Index t = 0; t < targets.size(); ++t) {
    const Index partner = uniform_index(targets.size(), rng);
    const double beta = sample_mix_weight(alpha, BetaSide::unconstrained, rng);
    set.samples.push_back(mix_pair(
        targets.inputs.row(partner).transpose(),
        MixMember{Origin::target, partner, pseudo[static_cast<std::size_t>(partner)], LabelKind::pseudo},
        targets.inputs.row(t).transpose(),
        MixMember{Origin::target, t, pseudo[static_cast<std::size_t>(t)], LabelKind::pseudo}, beta,
        num_classes));
  }
  return set;
}

}  // namespace fuda
