#include "fuda/xvd.hpp"

#include <iomanip>
#include <ostream>

namespace fuda {

std::string to_string(Origin origin) {
  switch (origin) {
    case Origin::labeled_source: return "labeled_source";
    case Origin::unlabeled_source: return "unlabeled_source";
    case Origin::target: return "target";
  }
  return "unknown";
}

std::string to_string(LabelKind kind) {
  return kind == LabelKind::ground_truth ? "ground_truth" : "pseudo";
}

Matrix MixedSet::inputs() const {
  if (samples.empty()) return Matrix();
  Matrix x(size(), samples.front().input.size());
  for (Index i = 0; i < size(); ++i) x.row(i) = samples[static_cast<std::size_t>(i)].input.transpose();
  return x;
}

Matrix MixedSet::soft_labels() const {
  if (samples.empty()) return Matrix();
  Matrix y(size(), samples.front().soft_label.size());
  for (Index i = 0; i < size(); ++i)
    y.row(i) = samples[static_cast<std::size_t>(i)].soft_label.transpose();
  return y;
}

double reflect_weight(double raw, BetaSide side) {
  switch (side) {
    case BetaSide::dominant_first: return std::max(raw, 1.0 - raw);
    case BetaSide::dominant_second: return std::min(raw, 1.0 - raw);
    case BetaSide::unconstrained: return raw;
  }
  return raw;
}

double sample_mix_weight(double alpha, BetaSide side, Rng& rng) {
  if (!(alpha > 0.0)) throw Error("sample_mix_weight: alpha must be positive");
  return reflect_weight(sample_beta(alpha, alpha, rng), side);
}

MixedSample mix_pair(const Eigen::Ref<const Vector>& first_input, const MixMember& first,
                     const Eigen::Ref<const Vector>& second_input, const MixMember& second,
                     double beta, int num_classes) {
  if (first_input.size() != second_input.size()) throw Error("mix_pair: input shapes differ");
  if (first.label < 0 || first.label >= num_classes || second.label < 0 ||
      second.label >= num_classes)
    throw Error("mix_pair: label out of range");
  MixedSample s;
  s.input = beta * first_input + (1.0 - beta) * second_input;
  s.soft_label = Vector::Zero(num_classes);
  s.soft_label(first.label) += beta;
  s.soft_label(second.label) += 1.0 - beta;
  s.beta = beta;
  s.first = first;
  s.second = second;
  return s;
}

int argmax_class(const Eigen::Ref<const RowVector>& row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k)
    if (row(k) > row(best)) best = k;
  return static_cast<int>(best);
}

std::vector<int> argmax_classes(const Eigen::Ref<const Matrix>& rows) {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  for (Index i = 0; i < rows.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax_class(rows.row(i));
  return out;
}

CrossBlendSet build_cross_blend(const UnlabeledSet& targets, const IndexList& confident_targets,
                                const LabeledSet& labeled_source, const IndexList& matched_sources,
                                const std::vector<int>& target_pseudo_labels, double alpha,
                                Rng& rng) {
  if (confident_targets.size() != matched_sources.size() ||
      confident_targets.size() != target_pseudo_labels.size())
    throw Error("build_cross_blend: target, match and pseudo-label lists are misaligned");
  CrossBlendSet set;
  set.samples.reserve(confident_targets.size());
  for (std::size_t i = 0; i < confident_targets.size(); ++i) {
    const Index t = confident_targets[i];
    const Index s = matched_sources[i];
    if (t < 0 || t >= targets.size() || s < 0 || s >= labeled_source.size())
      throw Error("build_cross_blend: index out of range");
    const double beta = sample_mix_weight(alpha, BetaSide::dominant_first, rng);
    set.samples.push_back(mix_pair(
        targets.inputs.row(t).transpose(),
        MixMember{Origin::target, t, target_pseudo_labels[i], LabelKind::pseudo},
        labeled_source.inputs.row(s).transpose(),
        MixMember{Origin::labeled_source, s, labeled_source.labels[static_cast<std::size_t>(s)],
                  LabelKind::ground_truth},
        beta, labeled_source.num_classes));
  }
  return set;
}

XvdPlan xvd_epoch_plan(const EpochSnapshot& snapshot, const EntropyTable& entropies,
                       const LabeledSet& labeled_source, const UnlabeledSet& targets,
                       double confident_ratio, double alpha, Rng& rng) {
  if (snapshot.target.size() != targets.size() || entropies.size() != targets.size())
    throw Error("xvd_epoch_plan: snapshot does not cover the target set");
  if (snapshot.labeled_source.size() != labeled_source.size())
    throw Error("xvd_epoch_plan: snapshot does not cover the labeled source set");
  XvdPlan plan;
  plan.scores = compute_score_matrix(snapshot.target.features, snapshot.labeled_source.features,
                                     snapshot.epoch);
  plan.matches = nearest_source_match(plan.scores);
  plan.confident = top_confident_targets(entropies, confident_ratio);
  IndexList matched;
  std::vector<int> pseudo;
  matched.reserve(plan.confident.size());
  pseudo.reserve(plan.confident.size());
  for (Index t : plan.confident) {
    matched.push_back(plan.matches[static_cast<std::size_t>(t)]);
    pseudo.push_back(argmax_class(snapshot.target.predictions.row(t)));
  }
  plan.set = build_cross_blend(targets, plan.confident, labeled_source, matched, pseudo, alpha, rng);
  return plan;
}

CrossBlendSet build_plain_cross_mix(const EpochSnapshot& snapshot, const LabeledSet& labeled_source,
                                    const UnlabeledSet& unlabeled_source, const UnlabeledSet& targets,
                                    double alpha, Rng& rng) {
  const Index n_ls = labeled_source.size(), n_us = unlabeled_source.size();
  if (n_ls + n_us == 0) throw Error("build_plain_cross_mix: no source samples");
  if (snapshot.target.predictions.rows() != targets.size())
    throw Error("build_plain_cross_mix: snapshot does not cover the target set");
  if (n_us > 0 && snapshot.unlabeled_source.predictions.rows() != n_us)
    throw Error("build_plain_cross_mix: snapshot does not cover the unlabeled source set");
  CrossBlendSet set;
  set.samples.reserve(static_cast<std::size_t>(targets.size()));
  for (Index t = 0; t < targets.size(); ++t) {
    // Uniform over the whole source domain; unlabeled rows carry pseudo labels.
    const Index s = uniform_index(n_ls + n_us, rng);
    const double beta = sample_mix_weight(alpha, BetaSide::unconstrained, rng);
    const MixMember target{Origin::target, t, argmax_class(snapshot.target.predictions.row(t)),
                           LabelKind::pseudo};
    if (s < n_ls) {
      set.samples.push_back(mix_pair(targets.inputs.row(t).transpose(), target,
                                     labeled_source.inputs.row(s).transpose(),
                                     MixMember{Origin::labeled_source, s,
                                               labeled_source.labels[static_cast<std::size_t>(s)],
                                               LabelKind::ground_truth},
                                     beta, labeled_source.num_classes));
    } else {
      const Index u = s - n_ls;
      set.samples.push_back(mix_pair(targets.inputs.row(t).transpose(), target,
                                     unlabeled_source.inputs.row(u).transpose(),
                                     MixMember{Origin::unlabeled_source, u,
                                               argmax_class(snapshot.unlabeled_source.predictions.row(u)),
                                               LabelKind::pseudo},
                                     beta, labeled_source.num_classes));
    }
  }
  return set;
}

void dump_mixed_set(std::ostream& out, const MixedSet& set) {
  out << "first_origin,first_index,first_label,first_label_kind,"
         "second_origin,second_index,second_label,second_label_kind,beta\n"
      << std::setprecision(17);
  auto member = [&](const MixMember& m) {
    out << to_string(m.origin) << ',' << m.index << ',' << m.label << ',' << to_string(m.label_kind);
  };
  for (const MixedSample& s : set.samples) {
    member(s.first);
    out << ',';
    member(s.second);
    out << ',' << s.beta << '\n';
  }
}

}  // namespace fuda
