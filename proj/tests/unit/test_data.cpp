#include "fuda/data.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using namespace fuda;

namespace {

DomainDataset toy(int c, int per_class) {
  Matrix x(c * per_class, 2);
  std::vector<std::optional<int>> labels;
  for (int i = 0; i < c * per_class; ++i) {
    x.row(i) << i, -i;
    labels.push_back(i % c);
  }
  return DomainDataset("toy", c, DomainTag::source, x, labels);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("fuda_test_" + name)).string();
}

}  // namespace

TEST_CASE("dataset rejects bad labels and duplicate ids") {
  Matrix x = Matrix::Zero(2, 1);
  CHECK_THROWS_AS(DomainDataset("d", 2, DomainTag::source, x, {0, 2}), Error);
  CHECK_THROWS_AS(DomainDataset("d", 2, DomainTag::source, x, {0, 1}, {3, 3}), Error);
  CHECK_THROWS_AS(DomainDataset("d", 1, DomainTag::source, x, {0, 0}), Error);
  DomainDataset ok("d", 2, DomainTag::source, x, {0, std::nullopt}, {10, 11});
  CHECK(ok.row_of(11) == 1);
  CHECK_FALSE(ok.row_of(5).has_value());
  CHECK_FALSE(ok.fully_labeled());
  CHECK_THROWS_AS(ok.require_labels(), Error);
}

TEST_CASE("few-shot split: 3 classes x 10, 3 shots") {
  const DomainDataset d = toy(3, 10);
  const auto [ls, us] = sample_few_shot(d, ShotsPerClass{3}, 7);
  CHECK(ls.size() == 9);
  CHECK(us.size() == 21);
  for (int k = 0; k < 3; ++k) CHECK(ls.rows_with_label(k).size() == 3);
  // partition of ids, and the unlabeled side has no labels
  std::set<Index> ids(ls.ids().begin(), ls.ids().end());
  for (Index id : us.ids()) CHECK(ids.insert(id).second);
  CHECK(ids.size() == 30);
  for (const auto& l : us.labels()) CHECK_FALSE(l.has_value());
}

TEST_CASE("few-shot split: 31 classes, 1 shot") {
  const auto [ls, us] = sample_few_shot(toy(31, 4), ShotsPerClass{1}, 0);
  CHECK(ls.size() == 31);
  CHECK(us.size() == 31 * 3);
}

TEST_CASE("few-shot split: all samples labeled leaves the unlabeled side empty") {
  const auto [ls, us] = sample_few_shot(toy(2, 5), ShotsPerClass{5}, 1);
  CHECK(ls.size() == 10);
  CHECK(us.empty());
}

TEST_CASE("few-shot split errors name the short class") {
  Matrix x = Matrix::Zero(5, 1);
  DomainDataset d("d", 2, DomainTag::source, x, {0, 0, 0, 1, 1});
  try {
    draw_few_shot_split(d, ShotsPerClass{3}, 0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("class 1") != std::string::npos);
  }
}

TEST_CASE("few-shot split is deterministic in the seed") {
  const DomainDataset d = toy(4, 20);
  const FewShotSplit a = draw_few_shot_split(d, ShotsPerClass{2}, 3);
  const FewShotSplit b = draw_few_shot_split(d, ShotsPerClass{2}, 3);
  CHECK(a.labeled_indices == b.labeled_indices);
  std::ostringstream sa, sb;
  write_split(sa, a, SampleResolver::by_index(d.size()));
  write_split(sb, b, SampleResolver::by_index(d.size()));
  CHECK(sa.str() == sb.str());
}

TEST_CASE("fraction mode: per-class floor, and every class must reach one label") {
  const DomainDataset d = toy(3, 40);
  const FewShotSplit s = draw_few_shot_split(d, LabelFraction{0.06, true}, 2);
  for (const auto& [cls, ids] : s.labeled_indices) CHECK(ids.size() == 2);  // floor(0.06 * 40)
  const FewShotSplit just = draw_few_shot_split(d, LabelFraction{0.025, true}, 2);
  for (const auto& [cls, ids] : just.labeled_indices) CHECK(ids.size() == 1);
  CHECK_THROWS_WITH_AS(draw_few_shot_split(d, LabelFraction{0.001, true}, 2), doctest::Contains("class 0"), Error);
  const FewShotSplit global = draw_few_shot_split(d, LabelFraction{0.1, false}, 2);
  CHECK(global.labeled_count() == 12);
}

TEST_CASE("split file parsing") {
  const SampleResolver r = SampleResolver::by_index(10);
  {
    std::istringstream in("0 2\n5 0\n");
    const FewShotSplit s = parse_split(in, r);
    CHECK(s.labeled_indices.size() == 2);
    CHECK(s.labeled_indices.at(2) == IndexList{0});
    CHECK(s.labeled_indices.at(0) == IndexList{5});
  }
  {
    std::istringstream in("");
    CHECK(parse_split(in, r).labeled_count() == 0);
  }
  {
    std::istringstream in("1 0\n2 1\nabc\n");
    try {
      parse_split(in, r);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  {
    std::istringstream in("42 0\n");
    CHECK_THROWS_AS(parse_split(in, r), Error);
  }
}

TEST_CASE("split file round trip, index and path resolvers") {
  const DomainDataset d = toy(3, 6);
  const FewShotSplit s = draw_few_shot_split(d, ShotsPerClass{2}, 11);
  const std::string path = temp_path("split.txt");
  save_split_file(path, s, SampleResolver::by_index(d.size()));
  CHECK(load_split_file(path, SampleResolver::by_index(d.size())).labeled_indices == s.labeled_indices);

  std::vector<std::string> files;
  for (Index i = 0; i < d.size(); ++i) files.push_back("class_x/img_" + std::to_string(i) + ".png");
  const SampleResolver by_path = SampleResolver::by_path(files);
  std::ostringstream out;
  write_split(out, s, by_path);
  CHECK(out.str().find("class_x/img_") != std::string::npos);
  std::istringstream in(out.str());
  CHECK(parse_split(in, by_path).labeled_indices == s.labeled_indices);

  const auto [ls, us] = apply_split(d, s);
  CHECK(ls.size() == 6);
  CHECK(ls.size() + us.size() == d.size());
}

TEST_CASE("apply_split rejects duplicates and unknown ids") {
  const DomainDataset d = toy(2, 3);
  FewShotSplit dup;
  dup.labeled_indices[0] = {0, 0};
  CHECK_THROWS_AS(apply_split(d, dup), Error);
  FewShotSplit unknown;
  unknown.labeled_indices[1] = {99};
  CHECK_THROWS_AS(apply_split(d, unknown), Error);
}

TEST_CASE("synthetic shift: identity transform reproduces the source draws") {
  SyntheticShiftConfig cfg;
  cfg.theta = 0.0;
  const auto [s, t] = make_synthetic_shift(cfg, 5);
  CHECK(s.size() == 800);
  CHECK(t.size() == 800);
  CHECK(s.inputs() == t.inputs());
  CHECK(s.labels() == t.labels());
  CHECK(s.fully_labeled());
  CHECK(t.fully_labeled());
}

TEST_CASE("synthetic shift: quarter turn moves class means") {
  SyntheticShiftConfig cfg;
  cfg.num_classes = 2;
  cfg.samples_per_class = 2000;
  cfg.radius = 2.0;
  cfg.sigma = 0.2;
  cfg.theta = M_PI / 2;
  const auto [s, t] = make_synthetic_shift(cfg, 9);
  for (int k = 0; k < 2; ++k) {
    RowVector ms = RowVector::Zero(2), mt = RowVector::Zero(2);
    const IndexList rows = t.rows_with_label(k);
    for (Index r : rows) {
      ms += s.inputs().row(r);
      mt += t.inputs().row(r);
    }
    ms /= static_cast<double>(rows.size());
    mt /= static_cast<double>(rows.size());
    const double sign = k == 0 ? 1.0 : -1.0;
    CHECK(ms(0) == doctest::Approx(sign * 2.0).epsilon(0.03));
    CHECK(std::abs(mt(0)) < 0.03);
    CHECK(mt(1) == doctest::Approx(sign * 2.0).epsilon(0.03));
  }
}

TEST_CASE("synthetic shift: a source-only linear classifier is above chance but below perfect on target") {
  SyntheticShiftConfig cfg;
  cfg.samples_per_class = 50;
  cfg.theta = M_PI / 6;
  cfg.sigma = 0.3;
  const auto [s, t] = make_synthetic_shift(cfg, 1);
  // Oracle: softmax regression trained by full-batch gradient descent on the source.
  const int c = 4;
  Matrix w = Matrix::Zero(3, c);
  auto design = [](const Matrix& x) {
    Matrix a(x.rows(), 3);
    a << x, Matrix::Ones(x.rows(), 1);
    return a;
  };
  const Matrix a = design(s.inputs());
  const std::vector<int> ys = s.require_labels();
  for (int it = 0; it < 2000; ++it) {
    Matrix z = a * w;
    for (Index i = 0; i < z.rows(); ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp();
      z.row(i) /= z.row(i).sum();
      z(i, ys[static_cast<std::size_t>(i)]) -= 1.0;
    }
    w -= 0.5 * a.transpose() * z / static_cast<double>(z.rows());
  }
  const Matrix zt = design(t.inputs()) * w;
  const std::vector<int> yt = t.require_labels();
  int correct = 0;
  for (Index i = 0; i < zt.rows(); ++i) {
    Index arg;
    zt.row(i).maxCoeff(&arg);
    correct += arg == yt[static_cast<std::size_t>(i)];
  }
  const double acc = correct / static_cast<double>(zt.rows());
  CHECK(acc > 0.25);
  CHECK(acc < 1.0);
}

TEST_CASE("synthetic shift: image mode renders unit-range 16x16 blobs") {
  SyntheticShiftConfig cfg;
  cfg.mode = InputMode::image16;
  cfg.samples_per_class = 5;
  const auto [s, t] = make_synthetic_shift(cfg, 2);
  CHECK(s.input_dim() == 256);
  CHECK(s.inputs().minCoeff() >= 0.0);
  CHECK(s.inputs().maxCoeff() <= 1.0);
  CHECK(s.inputs().maxCoeff() > 0.5);
}

TEST_CASE("synthetic config validation") {
  SyntheticShiftConfig cfg;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.theta = M_PI;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("dataset table loader") {
  const std::string path = temp_path("table.txt");
  {
    std::ofstream out(path);
    out << "# label f1 f2\n0 1.0 2.0\n- 3.0 4.0\n1 5 6\n";
  }
  const DomainDataset d = load_dataset_table(path, "t", 2, DomainTag::target);
  CHECK(d.size() == 3);
  CHECK(d.input_dim() == 2);
  CHECK(d.labels()[1] == std::nullopt);
  CHECK(d.inputs()(2, 1) == 6.0);
  {
    std::ofstream out(path);
    out << "0 1.0 2.0\n1 3.0\n";
  }
  CHECK_THROWS_AS(load_dataset_table(path, "t", 2, DomainTag::target), Error);
}
