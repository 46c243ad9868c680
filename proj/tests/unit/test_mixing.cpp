#include "fuda/ivd.hpp"
#include "fuda/random.hpp"
#include "fuda/xvd.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <sstream>

using namespace fuda;

namespace {

LabeledSet labeled(Matrix x, std::vector<int> y, int c) {
  LabeledSet s;
  s.inputs = std::move(x);
  s.labels = std::move(y);
  s.num_classes = c;
  for (Index i = 0; i < s.inputs.rows(); ++i) s.ids.push_back(i);
  return s;
}

UnlabeledSet unlabeled(Matrix x) {
  UnlabeledSet s;
  s.inputs = std::move(x);
  for (Index i = 0; i < s.inputs.rows(); ++i) s.ids.push_back(i);
  return s;
}

}  // namespace

TEST_CASE("beta reflection") {
  CHECK(reflect_weight(0.3, BetaSide::dominant_first) == doctest::Approx(0.7));
  CHECK(reflect_weight(0.8, BetaSide::dominant_first) == 0.8);
  CHECK(reflect_weight(0.8, BetaSide::dominant_second) == doctest::Approx(0.2));
  CHECK(reflect_weight(0.3, BetaSide::dominant_second) == 0.3);
  CHECK(reflect_weight(0.3, BetaSide::unconstrained) == 0.3);
  Rng rng = make_rng(0, Stream::beta);
  CHECK_THROWS_AS(sample_mix_weight(0.0, BetaSide::dominant_first, rng), Error);
}

TEST_CASE("beta sides hold on every draw and the unconstrained draw is symmetric") {
  Rng rng = make_rng(1, Stream::beta);
  double mean = 0.0;
  for (int i = 0; i < 5000; ++i) {
    CHECK(sample_mix_weight(0.75, BetaSide::dominant_first, rng) >= 0.5);
    CHECK(sample_mix_weight(0.75, BetaSide::dominant_second, rng) <= 0.5);
    mean += sample_mix_weight(0.75, BetaSide::unconstrained, rng);
  }
  // Beta(a, a) has mean 1/2 and variance 1 / (4 (2a + 1)).
  const double sd = std::sqrt(1.0 / (4 * 2.5) / 5000);
  CHECK(std::abs(mean / 5000 - 0.5) < 4 * sd);
}

TEST_CASE("mix_pair arithmetic") {
  Vector a(1), b(1);
  a << 0.2;
  b << 0.6;
  const MixedSample s = mix_pair(a, MixMember{Origin::target, 0, 1, LabelKind::pseudo}, b,
                                 MixMember{Origin::labeled_source, 0, 2, LabelKind::ground_truth}, 0.75, 3);
  CHECK(s.input(0) == doctest::Approx(0.3).epsilon(1e-15));
  Vector expected(3);
  expected << 0, 0.75, 0.25;
  CHECK((s.soft_label - expected).norm() < 1e-15);
}

TEST_CASE("cross blend: soft labels, agreement and misalignment") {
  Matrix t(2, 1), s(2, 1);
  t << 0.0, 1.0;
  s << 0.5, 0.9;
  const LabeledSet ls = labeled(s, {2, 1}, 3);
  const UnlabeledSet ut = unlabeled(t);
  Rng rng = make_rng(2, Stream::beta);
  const CrossBlendSet set = build_cross_blend(ut, {0, 1}, ls, {0, 1}, {1, 1}, 0.75, rng);
  REQUIRE(set.size() == 2);
  const MixedSample& first = set.samples[0];
  Vector y(3);
  y << 0, first.beta, 1 - first.beta;
  CHECK((first.soft_label - y).norm() < 1e-12);
  CHECK(first.first.origin == Origin::target);
  CHECK(first.second.origin == Origin::labeled_source);
  // pseudo class equals source class: one-hot whatever beta is
  CHECK((set.samples[1].soft_label - Vector::Unit(3, 1)).norm() < 1e-15);
  CHECK_THROWS_AS(build_cross_blend(ut, {0, 1}, ls, {0}, {1, 1}, 0.75, rng), Error);
}

TEST_CASE("cross blend: convexity keeps unit-range inputs in range") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix t(30, 8), s(3, 8);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = u(gen);
  for (Index i = 0; i < s.size(); ++i) s.data()[i] = u(gen);
  const LabeledSet ls = labeled(s, {0, 1, 2}, 3);
  IndexList targets, matches;
  std::vector<int> pseudo;
  for (Index i = 0; i < 30; ++i) targets.push_back(i), matches.push_back(i % 3), pseudo.push_back(static_cast<int>(i % 3));
  Rng rng = make_rng(3, Stream::beta);
  const CrossBlendSet set = build_cross_blend(unlabeled(t), targets, ls, matches, pseudo, 0.75, rng);
  CHECK(set.inputs().minCoeff() >= 0.0);
  CHECK(set.inputs().maxCoeff() <= 1.0);
}

TEST_CASE("xvd plan: one labeled source forces every match, and is deterministic") {
  EpochSnapshot snap;
  std::mt19937_64 gen(4);
  snap.target.features = oracle::random_unit_rows(12, 3, gen);
  snap.target.predictions = oracle::random_simplex_rows(12, 2, gen);
  snap.labeled_source.features = oracle::random_unit_rows(1, 3, gen);
  snap.labeled_source.predictions = oracle::random_simplex_rows(1, 2, gen);
  const UnlabeledSet ut = unlabeled(Matrix::Random(12, 2));
  const LabeledSet ls = labeled(Matrix::Random(1, 2), {1}, 2);
  const EntropyTable table = compute_entropy_table(snap.target.predictions);
  Rng a = make_rng(5, Stream::beta), b = make_rng(5, Stream::beta);
  const XvdPlan p = xvd_epoch_plan(snap, table, ls, ut, 1.0, 0.75, a);
  const XvdPlan q = xvd_epoch_plan(snap, table, ls, ut, 1.0, 0.75, b);
  CHECK(p.set.size() == 12);
  for (const MixedSample& s : p.set.samples) {
    CHECK(s.second.index == 0);
    CHECK(s.second.origin == Origin::labeled_source);
  }
  CHECK(p.set.inputs() == q.set.inputs());
  CHECK(p.set.soft_labels() == q.set.soft_labels());
  // floor(0.75 * 12) = 9 confident targets
  Rng c = make_rng(5, Stream::beta);
  CHECK(xvd_epoch_plan(snap, table, ls, ut, 0.75, 0.75, c).set.size() == 9);
}

TEST_CASE("xvd plan: separated blobs match their own class") {
  // Features equal to the inputs' blob direction; one labeled source per blob centre.
  Matrix centres(2, 2);
  centres << 1, 0, 0, 1;
  std::mt19937_64 gen(6);
  std::normal_distribution<double> g(0.0, 0.05);
  EpochSnapshot snap;
  snap.target.features.resize(20, 2);
  snap.target.predictions.resize(20, 2);
  std::vector<int> truth;
  for (Index i = 0; i < 20; ++i) {
    const int k = static_cast<int>(i % 2);
    truth.push_back(k);
    RowVector f = centres.row(k) + RowVector::NullaryExpr(2, [&] { return g(gen); });
    snap.target.features.row(i) = f / f.norm();
    snap.target.predictions.row(i) << (k == 0 ? 0.9 : 0.1), (k == 0 ? 0.1 : 0.9);
  }
  snap.labeled_source.features = centres;
  snap.labeled_source.predictions = Matrix::Identity(2, 2);
  const LabeledSet ls = labeled(centres, {0, 1}, 2);
  Rng rng = make_rng(7, Stream::beta);
  const XvdPlan plan = xvd_epoch_plan(snap, compute_entropy_table(snap.target.predictions), ls,
                                      unlabeled(snap.target.features), 1.0, 0.75, rng);
  for (std::size_t i = 0; i < plan.matches.size(); ++i)
    CHECK(ls.labels[static_cast<std::size_t>(plan.matches[i])] == truth[i]);
}

TEST_CASE("guidance sets: counts, labels and errors") {
  EntropyTable t;
  t.values = Vector::LinSpaced(10, 0.0, 1.0);
  const DifficultySplit split = split_by_difficulty(t, 0.1, 0.65);
  std::mt19937_64 gen(8);
  const Matrix preds = oracle::random_simplex_rows(10, 3, gen);
  const LabeledSet ls = labeled(Matrix::Zero(4, 2), {0, 1, 2, 0}, 3);
  const GuidanceSets g = build_guidance_sets(ls, split, preds);
  CHECK(g.easy.size() == 5);
  CHECK(g.hard.size() == 6);
  for (const MixMember& m : g.easy) {
    if (m.origin == Origin::labeled_source) {
      CHECK(m.label_kind == LabelKind::ground_truth);
      CHECK(m.label == ls.labels[static_cast<std::size_t>(m.index)]);
    } else {
      CHECK(m.label_kind == LabelKind::pseudo);
      CHECK(m.label == argmax_class(preds.row(m.index)));
    }
  }
  for (const MixMember& m : g.hard)
    for (Index o : split.outlier) CHECK(m.index != o);

  // N1 = 0 with labeled sources still works; with neither it must fail.
  const DifficultySplit no_easy = split_by_difficulty(t, 0.0, 0.5);
  CHECK(build_guidance_sets(ls, no_easy, preds).easy.size() == 4);
  try {
    build_guidance_sets(labeled(Matrix(0, 2), {}, 3), no_easy, preds);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("disable") != std::string::npos);
  }
}

TEST_CASE("intra mix: arithmetic, forced pairing, empty hard set") {
  const LabeledSet ls = labeled(Matrix::Constant(1, 1, 0.0), {0}, 3);
  const UnlabeledSet ut = unlabeled(Matrix::Constant(3, 1, 1.0));
  GuidanceSets sets;
  sets.easy.push_back({Origin::labeled_source, 0, 0, LabelKind::ground_truth});
  sets.hard.push_back({Origin::target, 1, 2, LabelKind::pseudo});
  sets.hard.push_back({Origin::target, 2, 2, LabelKind::pseudo});
  Rng rng = make_rng(9, Stream::pairing);
  const IntraMixSet mix = build_intra_mix(sets, ls, ut, 0.75, rng);
  REQUIRE(mix.size() == 2);
  for (const MixedSample& s : mix.samples) {
    CHECK(s.first.index == 0);  // the only easy sample
    CHECK(s.beta <= 0.5);
    Vector y(3);
    y << s.beta, 0, 1 - s.beta;
    CHECK((s.soft_label - y).norm() < 1e-15);
    CHECK(s.input(0) == doctest::Approx(1 - s.beta).epsilon(1e-15));
  }
  GuidanceSets no_hard;
  no_hard.easy = sets.easy;
  CHECK(build_intra_mix(no_hard, ls, ut, 0.75, rng).empty());
}

TEST_CASE("intra mix: partners are uniform over the easy set") {
  const LabeledSet ls = labeled(Matrix::Zero(5, 1), {0, 1, 0, 1, 0}, 2);
  const UnlabeledSet ut = unlabeled(Matrix::Zero(10, 1));
  GuidanceSets sets;
  for (Index i = 0; i < 5; ++i) sets.easy.push_back({Origin::labeled_source, i, ls.labels[static_cast<std::size_t>(i)], LabelKind::ground_truth});
  for (Index i = 0; i < 10; ++i) sets.hard.push_back({Origin::target, i, 1, LabelKind::pseudo});
  std::map<Index, int> freq;
  int total = 0;
  for (std::uint32_t seed = 0; seed < 100; ++seed) {
    Rng rng = make_rng(seed, Stream::pairing);
    for (const MixedSample& s : build_intra_mix(sets, ls, ut, 0.75, rng).samples) ++freq[s.first.index], ++total;
  }
  CHECK(total == 1000);
  const double expect = total / 5.0, sd = std::sqrt(total * 0.2 * 0.8);
  for (Index i = 0; i < 5; ++i) CHECK(std::abs(freq[i] - expect) < 3 * sd);
}

TEST_CASE("ivd plan: tied predictions still give a valid plan") {
  EpochSnapshot snap;
  snap.target.features = Matrix::Identity(8, 8);
  snap.target.predictions = Matrix::Constant(8, 2, 0.5);
  const LabeledSet ls = labeled(Matrix::Zero(2, 8), {0, 1}, 2);
  Rng rng = make_rng(10, Stream::pairing);
  const IvdPlan plan = ivd_epoch_plan(snap, compute_entropy_table(snap.target.predictions), ls,
                                      unlabeled(Matrix::Zero(8, 8)), 0.25, 0.5, 0.75, rng);
  CHECK(plan.split.easy == IndexList{0, 1});
  CHECK(plan.split.hard == IndexList{2, 3, 4, 5});
  CHECK(plan.set.size() == 4);
  for (const MixedSample& s : plan.set.samples) CHECK(s.beta <= 0.5);
}

TEST_CASE("plain mixup comparators pair uniformly with unconstrained weights") {
  EpochSnapshot snap;
  std::mt19937_64 gen(11);
  snap.target.predictions = oracle::random_simplex_rows(200, 2, gen);
  snap.unlabeled_source.predictions = oracle::random_simplex_rows(6, 2, gen);
  const UnlabeledSet ut = unlabeled(Matrix::Zero(200, 1));
  const UnlabeledSet us = unlabeled(Matrix::Zero(6, 1));
  const LabeledSet ls = labeled(Matrix::Zero(2, 1), {0, 1}, 2);
  Rng rng = make_rng(12, Stream::beta);
  const CrossBlendSet x = build_plain_cross_mix(snap, ls, us, ut, 0.75, rng);
  // partners are drawn from the whole source domain: 2 labeled + 6 unlabeled rows
  int from_ls = 0;
  for (const MixedSample& s : x.samples) {
    if (s.second.origin == Origin::labeled_source) {
      ++from_ls;
      CHECK(s.second.label_kind == LabelKind::ground_truth);
    } else {
      REQUIRE(s.second.origin == Origin::unlabeled_source);
      CHECK(s.second.label_kind == LabelKind::pseudo);
      CHECK(s.second.label == argmax_class(snap.unlabeled_source.predictions.row(s.second.index)));
    }
  }
  CHECK(std::abs(from_ls - 50) < 3 * std::sqrt(200 * 0.25 * 0.75));
  const IntraMixSet i = build_plain_intra_mix(snap, ut, 2, 0.75, rng);
  int above = 0, below = 0;
  for (const auto* set : {&x, &i})
    for (const MixedSample& s : set->samples) (s.beta > 0.5 ? above : below)++;
  CHECK(above > 100);
  CHECK(below > 100);
  std::ostringstream dump;
  dump_mixed_set(dump, x);
  CHECK(dump.str().rfind("first_origin,first_index", 0) == 0);
}
