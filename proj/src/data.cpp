#include "fuda/data.hpp"

#include "fuda/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fuda {

std::string to_string(DomainTag tag) { return tag == DomainTag::source ? "source" : "target"; }

DomainDataset::DomainDataset(std::string name, int num_classes, DomainTag domain, Matrix inputs,
                             std::vector<std::optional<int>> labels, IndexList ids)
    : name_(std::move(name)),
      num_classes_(num_classes),
      domain_(domain),
      inputs_(std::move(inputs)),
      labels_(std::move(labels)),
      ids_(std::move(ids)) {
  if (num_classes_ < 2) throw Error("dataset '" + name_ + "': num_classes must be at least 2");
  if (static_cast<Index>(labels_.size()) != inputs_.rows())
    throw Error("dataset '" + name_ + "': label count does not match row count");
  if (ids_.empty()) {
    ids_.resize(labels_.size());
    for (std::size_t i = 0; i < ids_.size(); ++i) ids_[i] = static_cast<Index>(i);
  }
  if (ids_.size() != labels_.size())
    throw Error("dataset '" + name_ + "': id count does not match row count");
  IndexList sorted = ids_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw Error("dataset '" + name_ + "': duplicate sample id");
  for (const auto& label : labels_) {
    if (label && (*label < 0 || *label >= num_classes_))
      throw Error("dataset '" + name_ + "': label " + std::to_string(*label) + " outside [0, " +
                  std::to_string(num_classes_) + ")");
  }
}

Sample DomainDataset::sample(Index row) const {
  return Sample{inputs_.row(row).transpose(), labels_[static_cast<std::size_t>(row)], domain_,
                ids_[static_cast<std::size_t>(row)]};
}

std::optional<Index> DomainDataset::row_of(Index id) const {
  auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) return std::nullopt;
  return static_cast<Index>(it - ids_.begin());
}

bool DomainDataset::fully_labeled() const {
  return std::all_of(labels_.begin(), labels_.end(), [](const auto& l) { return l.has_value(); });
}

std::vector<int> DomainDataset::require_labels() const {
  std::vector<int> out;
  out.reserve(labels_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!labels_[i])
      throw Error("dataset '" + name_ + "': sample " + std::to_string(ids_[i]) + " has no label");
    out.push_back(*labels_[i]);
  }
  return out;
}

IndexList DomainDataset::rows_with_label(int label) const {
  IndexList rows;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] && *labels_[i] == label) rows.push_back(static_cast<Index>(i));
  return rows;
}

DomainDataset DomainDataset::subset(const IndexList& rows, std::string name) const {
  Matrix x(static_cast<Index>(rows.size()), inputs_.cols());
  std::vector<std::optional<int>> labels;
  IndexList ids;
  labels.reserve(rows.size());
  ids.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Index>(i)) = inputs_.row(rows[i]);
    labels.push_back(labels_[static_cast<std::size_t>(rows[i])]);
    ids.push_back(ids_[static_cast<std::size_t>(rows[i])]);
  }
  return DomainDataset(std::move(name), num_classes_, domain_, std::move(x), std::move(labels),
                       std::move(ids));
}

DomainDataset DomainDataset::with_labels(std::vector<std::optional<int>> labels) const {
  return DomainDataset(name_, num_classes_, domain_, inputs_, std::move(labels), ids_);
}

DomainDataset DomainDataset::without_labels(std::string name) const {
  return DomainDataset(std::move(name), num_classes_, domain_, inputs_,
                       std::vector<std::optional<int>>(labels_.size()), ids_);
}

LabeledSet DomainDataset::labeled_set() const {
  return LabeledSet{inputs_, require_labels(), ids_, num_classes_};
}

UnlabeledSet DomainDataset::unlabeled_set() const { return UnlabeledSet{inputs_, ids_}; }

// ---------------------------------------------------------------------------

Index FewShotSplit::labeled_count() const {
  Index n = 0;
  for (const auto& [cls, ids] : labeled_indices) n += static_cast<Index>(ids.size());
  return n;
}

namespace {

IndexList pick(IndexList pool, Index count, Rng& rng) {
  std::shuffle(pool.begin(), pool.end(), rng);
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace

FewShotSplit draw_few_shot_split(const DomainDataset& dataset, const SplitMode& mode,
                                 std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::split);
  FewShotSplit split;
  split.mode = mode;
  const int c = dataset.num_classes();

  auto ids_of = [&](const IndexList& rows) {
    IndexList ids;
    for (Index r : rows) ids.push_back(dataset.ids()[static_cast<std::size_t>(r)]);
    return ids;
  };

  if (const auto* shots = std::get_if<ShotsPerClass>(&mode)) {
    if (shots->shots < 0) throw Error("shots per class must be nonnegative");
    for (int k = 0; k < c; ++k) {
      IndexList rows = dataset.rows_with_label(k);
      if (static_cast<Index>(rows.size()) < shots->shots)
        throw Error("class " + std::to_string(k) + " has " + std::to_string(rows.size()) +
                    " labeled samples, fewer than the requested " + std::to_string(shots->shots) +
                    " shots");
      split.labeled_indices[k] = ids_of(pick(std::move(rows), shots->shots, rng));
    }
  } else if (const auto* frac = std::get_if<LabelFraction>(&mode)) {
    if (!(frac->fraction > 0.0 && frac->fraction <= 1.0))
      throw Error("label fraction must lie in (0, 1]");
    if (frac->class_balanced) {
      for (int k = 0; k < c; ++k) {
        IndexList rows = dataset.rows_with_label(k);
        const double want = frac->fraction * static_cast<double>(rows.size());
        if (rows.empty() || want < 1.0)
          throw Error("class " + std::to_string(k) + " has too few samples for label fraction " +
                      std::to_string(frac->fraction));
        const auto count = std::max<Index>(1, static_cast<Index>(std::floor(want)));
        split.labeled_indices[k] = ids_of(pick(std::move(rows), count, rng));
      }
    } else {
      IndexList rows;
      for (Index r = 0; r < dataset.size(); ++r)
        if (dataset.labels()[static_cast<std::size_t>(r)]) rows.push_back(r);
      const auto count = std::min<Index>(
          static_cast<Index>(rows.size()),
          std::max<Index>(1, static_cast<Index>(std::floor(frac->fraction *
                                                            static_cast<double>(rows.size())))));
      for (Index r : pick(std::move(rows), count, rng)) {
        const int label = *dataset.labels()[static_cast<std::size_t>(r)];
        split.labeled_indices[label].push_back(dataset.ids()[static_cast<std::size_t>(r)]);
      }
    }
  } else {
    throw Error("an explicit split cannot be sampled; load it from a split file");
  }
  for (auto& [cls, ids] : split.labeled_indices) std::sort(ids.begin(), ids.end());
  return split;
}

std::pair<DomainDataset, DomainDataset> apply_split(const DomainDataset& dataset,
                                                    const FewShotSplit& split) {
  std::vector<char> labeled(static_cast<std::size_t>(dataset.size()), 0);
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(dataset.size()));
  for (const auto& [cls, ids] : split.labeled_indices) {
    if (cls < 0 || cls >= dataset.num_classes())
      throw Error("split class " + std::to_string(cls) + " outside dataset classes");
    for (Index id : ids) {
      const auto row = dataset.row_of(id);
      if (!row) throw Error("split references unknown sample " + std::to_string(id));
      auto& flag = labeled[static_cast<std::size_t>(*row)];
      if (flag) throw Error("split lists sample " + std::to_string(id) + " more than once");
      flag = 1;
      labels[static_cast<std::size_t>(*row)] = cls;
    }
  }
  IndexList ls_rows, us_rows;
  for (Index r = 0; r < dataset.size(); ++r)
    (labeled[static_cast<std::size_t>(r)] ? ls_rows : us_rows).push_back(r);

  DomainDataset relabeled = dataset.with_labels(std::move(labels));
  return {relabeled.subset(ls_rows, dataset.name() + "/labeled"),
          relabeled.subset(us_rows, dataset.name() + "/unlabeled")};
}

std::pair<DomainDataset, DomainDataset> sample_few_shot(const DomainDataset& dataset,
                                                        const SplitMode& mode,
                                                        std::uint64_t seed) {
  return apply_split(dataset, draw_few_shot_split(dataset, mode, seed));
}

// ---------------------------------------------------------------------------

SampleResolver SampleResolver::by_index(Index count) {
  SampleResolver r;
  r.count_ = count;
  return r;
}

SampleResolver SampleResolver::by_path(std::vector<std::string> relative_paths) {
  SampleResolver r;
  r.count_ = static_cast<Index>(relative_paths.size());
  for (std::size_t i = 0; i < relative_paths.size(); ++i) {
    if (!r.lookup_.emplace(relative_paths[i], static_cast<Index>(i)).second)
      throw Error("duplicate path in resolver: " + relative_paths[i]);
  }
  r.paths_ = std::move(relative_paths);
  return r;
}

Index SampleResolver::resolve(std::string_view identifier) const {
  if (!paths_.empty()) {
    auto it = lookup_.find(std::string(identifier));
    if (it == lookup_.end()) throw Error("unknown sample identifier '" + std::string(identifier) + "'");
    return it->second;
  }
  Index value = 0;
  std::size_t used = 0;
  try {
    value = static_cast<Index>(std::stoll(std::string(identifier), &used));
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != identifier.size() || identifier.empty())
    throw Error("sample identifier '" + std::string(identifier) + "' is not an integer index");
  if (value < 0 || value >= count_)
    throw Error("unknown sample identifier '" + std::string(identifier) + "'");
  return value;
}

std::string SampleResolver::identifier(Index id) const {
  if (!paths_.empty()) return paths_.at(static_cast<std::size_t>(id));
  return std::to_string(id);
}

FewShotSplit parse_split(std::istream& in, const SampleResolver& resolver) {
  FewShotSplit split;
  split.mode = ExplicitList{};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto space = line.rfind(' ');
    if (space == std::string::npos || space == 0 || space + 1 == line.size())
      throw Error("split file line " + std::to_string(line_no) + ": expected '<identifier> <class>'");
    const std::string id_text = line.substr(0, space);
    const std::string cls_text = line.substr(space + 1);
    int cls = 0;
    std::size_t used = 0;
    try {
      cls = std::stoi(cls_text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != cls_text.size() || cls < 0)
      throw Error("split file line " + std::to_string(line_no) + ": bad class index '" + cls_text +
                  "'");
    Index id = 0;
    try {
      id = resolver.resolve(id_text);
    } catch (const Error& e) {
      throw Error("split file line " + std::to_string(line_no) + ": " + e.what());
    }
    split.labeled_indices[cls].push_back(id);
  }
  return split;
}

FewShotSplit load_split_file(const std::string& path, const SampleResolver& resolver) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path);
  return parse_split(in, resolver);
}

void write_split(std::ostream& out, const FewShotSplit& split, const SampleResolver& resolver) {
  for (const auto& [cls, ids] : split.labeled_indices)
    for (Index id : ids) out << resolver.identifier(id) << ' ' << cls << '\n';
}

void save_split_file(const std::string& path, const FewShotSplit& split,
                     const SampleResolver& resolver) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write split file " + path);
  write_split(out, split, resolver);
}

// ---------------------------------------------------------------------------

void SyntheticShiftConfig::validate() const {
  if (num_classes < 2) throw Error("synthetic: num_classes must be at least 2");
  if (samples_per_class < 1) throw Error("synthetic: samples_per_class must be positive");
  if (feature_dim < 2) throw Error("synthetic: feature_dim must be at least 2");
  if (!(sigma > 0.0)) throw Error("synthetic: sigma must be positive");
  if (!(theta >= 0.0 && theta < std::numbers::pi)) throw Error("synthetic: theta must lie in [0, pi)");
  if (!(noise >= 0.0)) throw Error("synthetic: noise must be nonnegative");
  if (!translation.empty() && static_cast<int>(translation.size()) != feature_dim)
    throw Error("synthetic: translation length must equal feature_dim");
}

Index SyntheticShiftConfig::input_dim() const {
  return mode == InputMode::image16 ? kImageSide * kImageSide : feature_dim;
}

Vector render_image16(const Eigen::Ref<const Vector>& point, double radius) {
  // Positions map the circle of class means onto a ring of radius 4 pixels.
  const double scale = 4.0 / std::max(radius, 1e-9);
  const double centre = 0.5 * static_cast<double>(kImageSide - 1);
  const double cx = std::clamp(centre + scale * point(0), 0.0, double(kImageSide - 1));
  const double cy = std::clamp(centre + scale * point(1), 0.0, double(kImageSide - 1));
  constexpr double width = 1.5;
  Vector image(kImageSide * kImageSide);
  for (Index y = 0; y < kImageSide; ++y)
    for (Index x = 0; x < kImageSide; ++x) {
      const double d2 = (double(x) - cx) * (double(x) - cx) + (double(y) - cy) * (double(y) - cy);
      image(y * kImageSide + x) = std::exp(-d2 / (2.0 * width * width));
    }
  return image;
}

std::pair<DomainDataset, DomainDataset> make_synthetic_shift(const SyntheticShiftConfig& config,
                                                             std::uint64_t seed) {
  config.validate();
  const int c = config.num_classes;
  const int d = config.feature_dim;
  const Index n = static_cast<Index>(c) * config.samples_per_class;

  Rng draws = make_rng(seed, Stream::data, 0);
  Rng target_noise = make_rng(seed, Stream::data, 1);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix base(n, d);
  std::vector<std::optional<int>> labels(static_cast<std::size_t>(n));
  for (int k = 0; k < c; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / c;
    for (int s = 0; s < config.samples_per_class; ++s) {
      const Index row = static_cast<Index>(k) * config.samples_per_class + s;
      for (int j = 0; j < d; ++j) base(row, j) = config.sigma * normal(draws);
      base(row, 0) += config.radius * std::cos(angle);
      base(row, 1) += config.radius * std::sin(angle);
      labels[static_cast<std::size_t>(row)] = k;
    }
  }

  Matrix shifted = base;
  const double ct = std::cos(config.theta), st = std::sin(config.theta);
  shifted.col(0) = ct * base.col(0) - st * base.col(1);
  shifted.col(1) = st * base.col(0) + ct * base.col(1);
  if (!config.translation.empty())
    shifted.rowwise() += Eigen::Map<const RowVector>(config.translation.data(), d);
  if (config.noise > 0.0)
    for (Index r = 0; r < n; ++r)
      for (int j = 0; j < d; ++j) shifted(r, j) += config.noise * normal(target_noise);

  auto render = [&](const Matrix& points) {
    if (config.mode == InputMode::vector) return points;
    Matrix images(points.rows(), kImageSide * kImageSide);
    for (Index r = 0; r < points.rows(); ++r)
      images.row(r) = render_image16(points.row(r).transpose(), config.radius).transpose();
    return images;
  };

  return {DomainDataset("synthetic-source", c, DomainTag::source, render(base), labels),
          DomainDataset("synthetic-target", c, DomainTag::target, render(shifted), labels)};
}

DomainDataset load_dataset_table(const std::string& path, std::string name, int num_classes,
                                 DomainTag domain) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset table " + path);
  std::vector<std::vector<double>> rows;
  std::vector<std::optional<int>> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string label_text;
    fields >> label_text;
    std::optional<int> label;
    if (label_text != "-") {
      try {
        label = std::stoi(label_text);
      } catch (const std::exception&) {
        throw Error(path + " line " + std::to_string(line_no) + ": bad label '" + label_text + "'");
      }
    }
    std::vector<double> values;
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw Error(path + " line " + std::to_string(line_no) + ": bad feature value");
    if (!rows.empty() && values.size() != rows.front().size())
      throw Error(path + " line " + std::to_string(line_no) + ": inconsistent feature count");
    rows.push_back(std::move(values));
    labels.push_back(label);
  }
  if (rows.empty()) throw Error("dataset table " + path + " is empty");
  Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t j = 0; j < rows[r].size(); ++j)
      x(static_cast<Index>(r), static_cast<Index>(j)) = rows[r][j];
  return DomainDataset(std::move(name), num_classes, domain, std::move(x), std::move(labels));
}

}  // namespace fuda
