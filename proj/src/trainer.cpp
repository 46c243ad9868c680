#include "fuda/trainer.hpp"

#include "fuda/losses.hpp"
#include "fuda/random.hpp"

#include <cmath>

namespace fuda {

void LossWeights::validate() const {
  for (double w : {mi, self, xvd, ivd})
    if (!std::isfinite(w) || w < 0.0) throw Error("loss weights must be finite and nonnegative");
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw Error("temperature must be positive");
}

void HyperParams::validate() const {
  weights().validate();
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  auto unit = [](double r, const char* name) {
    if (!(r >= 0.0 && r <= 1.0)) throw Error(std::string(name) + " must lie in [0, 1]");
  };
  unit(confident_ratio, "confident_ratio");
  unit(easy_ratio, "easy_ratio");
  unit(hard_ratio, "hard_ratio");
  unit(center_momentum, "center_momentum");
  unit(bank_momentum, "bank_momentum");
  unit(momentum, "momentum");
  if (easy_ratio + hard_ratio > 1.0 + 1e-12) throw Error("easy_ratio + hard_ratio must not exceed 1");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (epochs < 0) throw Error("epochs must be nonnegative");
  if (warmup_epochs < 0) throw Error("warmup_epochs must be nonnegative");
  if (kmeans_restarts < 1) throw Error("kmeans_restarts must be positive");
}

LossWeights HyperParams::weights() const {
  return LossWeights{lambda_mi, lambda_self, lambda_xvd, lambda_ivd, temperature};
}

double total_loss(const ComponentLosses& losses, const LossWeights& weights) {
  double total = 0.0;
  auto add = [&](const std::optional<double>& value, double weight, const char* name) {
    if (!value) return;
    if (!std::isfinite(*value)) throw Error(std::string("loss component '") + name + "' is not finite");
    total += weight * *value;
  };
  add(losses.cls, 1.0, "cls");
  add(losses.mi, weights.mi, "mi");
  add(losses.self, weights.self, "self");
  add(losses.xvd, weights.xvd, "xvd");
  add(losses.ivd, weights.ivd, "ivd");
  return total;
}

Vector pseudo_label(const Eigen::Ref<const RowVector>& prediction) {
  Vector one_hot = Vector::Zero(prediction.size());
  one_hot(argmax_class(prediction)) = 1.0;
  return one_hot;
}

// ---------------------------------------------------------------------------

namespace {

// Cycles through a shuffled order of [0, size) in fixed-size chunks.
class BatchCursor {
 public:
  BatchCursor() = default;
  BatchCursor(Index size, Index batch, Rng rng) : rng_(std::move(rng)), batch_(batch) {
    order_ = random_permutation(size, rng_);
  }

  bool active() const { return batch_ > 0 && !order_.empty(); }

  IndexList next() {
    IndexList rows;
    rows.reserve(static_cast<std::size_t>(batch_));
    for (Index k = 0; k < batch_; ++k) {
      rows.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return rows;
  }

 private:
  Rng rng_;
  IndexList order_;
  std::size_t pos_ = 0;
  Index batch_ = 0;
};

enum Component : std::uint32_t { kCls = 0, kTarget = 1, kSource = 2, kXvd = 3, kIvd = 4 };

Matrix gather(const Matrix& m, const IndexList& rows) { return m(rows, Eigen::all); }

std::uint32_t stream_key(int epoch, std::uint32_t salt) {
  return (static_cast<std::uint32_t>(epoch) << 16) ^ salt;
}

}  // namespace

Trainer::Trainer(ModelConfig model_config, HyperParams hp, LabeledSet labeled_source,
                 UnlabeledSet unlabeled_source, UnlabeledSet targets)
    : hp_(hp),
      labeled_source_(std::move(labeled_source)),
      unlabeled_source_(std::move(unlabeled_source)),
      targets_(std::move(targets)) {
  hp_.validate();
  if (targets_.size() == 0) throw Error("trainer: target set is empty");
  if (labeled_source_.num_classes != model_config.num_classes)
    throw Error("trainer: labeled source classes do not match the model");
  all_source_.resize(labeled_source_.size() + unlabeled_source_.size(), model_config.input_dim);
  if (labeled_source_.size() > 0) all_source_.topRows(labeled_source_.size()) = labeled_source_.inputs;
  if (unlabeled_source_.size() > 0)
    all_source_.bottomRows(unlabeled_source_.size()) = unlabeled_source_.inputs;
  state_.model = AdaptationModel(std::move(model_config), hp_.seed);
  state_.velocity = Vector::Zero(state_.model.parameter_count());
  state_.prototypes.momentum = hp_.center_momentum;
  state_.memory.momentum = hp_.bank_momentum;
}

EpochSnapshot Trainer::take_snapshot() const {
  EpochSnapshot snap;
  snap.epoch = state_.epoch;
  const AdaptationModel& model = state_.model;
  if (labeled_source_.size() > 0)
    snap.labeled_source = model.extract_all(labeled_source_.inputs, hp_.batch_size);
  if (unlabeled_source_.size() > 0)
    snap.unlabeled_source = model.extract_all(unlabeled_source_.inputs, hp_.batch_size);
  snap.target = model.extract_all(targets_.inputs, hp_.batch_size);
  return snap;
}

void Trainer::rebuild_plans(std::uint32_t salt) {
  state_.cross_blend.reset();
  state_.intra_mix.reset();
  state_.split.reset();
  if (in_warmup()) return;
  const std::uint32_t key = stream_key(state_.epoch, salt);
  const int c = state_.model.config().num_classes;
  if (hp_.lambda_xvd > 0.0) {
    Rng rng = make_rng(hp_.seed, Stream::beta, key);
    if (hp_.mixing == MixingStrategy::plain) {
      state_.cross_blend = build_plain_cross_mix(state_.snapshot, labeled_source_, unlabeled_source_, targets_,
                                                 hp_.alpha, rng);
    } else {
      XvdPlan plan = xvd_epoch_plan(state_.snapshot, state_.entropies, labeled_source_, targets_,
                                    hp_.confident_ratio, hp_.alpha, rng);
      state_.cross_blend = std::move(plan.set);
    }
  }
  if (hp_.lambda_ivd > 0.0) {
    Rng rng = make_rng(hp_.seed, Stream::pairing, key);
    if (hp_.mixing == MixingStrategy::plain) {
      state_.intra_mix = build_plain_intra_mix(state_.snapshot, targets_, c, hp_.alpha, rng);
    } else {
      IvdPlan plan = ivd_epoch_plan(state_.snapshot, state_.entropies, labeled_source_, targets_,
                                    hp_.easy_ratio, hp_.hard_ratio, hp_.alpha, rng);
      state_.split = std::move(plan.split);
      state_.intra_mix = std::move(plan.set);
    }
  }
}

void Trainer::refresh_epoch_state() {
  state_.snapshot = take_snapshot();
  state_.entropies = compute_entropy_table(state_.snapshot.target.predictions, state_.epoch);
  if (labeled_source_.size() > 0) {
    state_.scores = compute_score_matrix(state_.snapshot.target.features,
                                         state_.snapshot.labeled_source.features, state_.epoch);
    state_.matches = nearest_source_match(state_.scores);
  }

  if (hp_.lambda_self > 0.0) {
    const int c = state_.model.config().num_classes;
    Matrix source_features(all_source_.rows(), state_.model.config().feature_dim);
    if (labeled_source_.size() > 0)
      source_features.topRows(labeled_source_.size()) = state_.snapshot.labeled_source.features;
    if (unlabeled_source_.size() > 0)
      source_features.bottomRows(unlabeled_source_.size()) = state_.snapshot.unlabeled_source.features;
    if (hp_.self_variant == SelfVariant::kmeans_proto) {
      const std::uint64_t kseed = hp_.seed ^ (0x9E3779B97F4A7C15ULL * (state_.epoch + 1));
      const KMeansResult src = kmeans_prototypes(source_features, c, kseed, hp_.kmeans_restarts);
      const KMeansResult tgt =
          kmeans_prototypes(state_.snapshot.target.features, c, kseed + 1, hp_.kmeans_restarts);
      state_.prototypes = update_centers(std::move(state_.prototypes), src, tgt);
    } else {
      state_.memory = update_memory_bank(std::move(state_.memory), source_features);
      state_.attention_centers =
          attention_centers(state_.memory, state_.model.classify_features(state_.memory.features));
    }
  }
  rebuild_plans(0);
  state_.refreshed = true;
}

EpochLosses Trainer::train_epoch() {
  if (!state_.refreshed) refresh_epoch_state();
  const bool warmup = in_warmup();
  const LossWeights w = hp_.weights();
  AdaptationModel& model = state_.model;

  const bool use_cls = labeled_source_.size() > 0;
  const bool use_mi = w.mi > 0.0;
  const bool use_self = !warmup && w.self > 0.0;
  const bool proto = use_self && hp_.self_variant == SelfVariant::kmeans_proto;
  const bool use_xvd = !warmup && state_.cross_blend && !state_.cross_blend->empty();
  const bool use_ivd = !warmup && state_.intra_mix && !state_.intra_mix->empty();
  const bool use_target = use_mi || use_self;

  Matrix xvd_inputs, xvd_labels, ivd_inputs, ivd_labels;
  auto load_sets = [&] {
    if (use_xvd) {
      xvd_inputs = state_.cross_blend->inputs();
      xvd_labels = state_.cross_blend->soft_labels();
    }
    if (use_ivd) {
      ivd_inputs = state_.intra_mix->inputs();
      ivd_labels = state_.intra_mix->soft_labels();
    }
  };
  load_sets();

  const Index b = hp_.batch_size;
  auto steps_for = [&](bool on, Index size) { return on && size > 0 ? (size + b - 1) / b : Index{0}; };
  const Index steps = std::max({steps_for(use_cls, labeled_source_.size()),
                                steps_for(use_target, targets_.size()),
                                steps_for(proto, all_source_.rows()),
                                steps_for(use_xvd, xvd_inputs.rows()),
                                steps_for(use_ivd, ivd_inputs.rows())});
  auto cursor = [&](bool on, Index size, Component which, std::uint32_t salt = 0) {
    if (!on || size == 0 || steps == 0) return BatchCursor();
    const Index per_step = std::min(b, (size + steps - 1) / steps);
    return BatchCursor(size, per_step,
                       make_rng(hp_.seed, Stream::batches, stream_key(state_.epoch, which * 64 + salt)));
  };
  BatchCursor cls_cur = cursor(use_cls, labeled_source_.size(), kCls);
  BatchCursor tgt_cur = cursor(use_target, targets_.size(), kTarget);
  BatchCursor src_cur = cursor(proto, all_source_.rows(), kSource);
  BatchCursor xvd_cur = cursor(use_xvd, xvd_inputs.rows(), kXvd);
  BatchCursor ivd_cur = cursor(use_ivd, ivd_inputs.rows(), kIvd);

  EpochLosses epoch_losses;
  Vector grad(model.parameter_count());
  const Index head = model.head_offset();
  const Index head_size = model.parameter_count() - head;
  const Matrix none;

  for (Index step = 0; step < steps; ++step) {
    if (!warmup && hp_.entropy_refresh == RefreshCadence::iteration && step > 0 &&
        (use_xvd || use_ivd)) {
      state_.snapshot.target = model.extract_all(targets_.inputs, hp_.batch_size);
      state_.entropies = compute_entropy_table(state_.snapshot.target.predictions, state_.epoch);
      rebuild_plans(static_cast<std::uint32_t>(step));
      load_sets();
      xvd_cur = cursor(use_xvd, xvd_inputs.rows(), kXvd, static_cast<std::uint32_t>(step % 64));
      ivd_cur = cursor(use_ivd, ivd_inputs.rows(), kIvd, static_cast<std::uint32_t>(step % 64));
    }

    grad.setZero();
    ComponentLosses losses;

    if (cls_cur.active()) {
      const IndexList rows = cls_cur.next();
      std::vector<int> labels;
      for (Index r : rows) labels.push_back(labeled_source_.labels[static_cast<std::size_t>(r)]);
      const ForwardPass pass = model.forward(gather(labeled_source_.inputs, rows));
      Matrix d_p;
      losses.cls = loss_cls(pass.probabilities, labels, &d_p);
      model.backward(pass, d_p, none, grad);
    }

    if (tgt_cur.active()) {
      const IndexList rows = tgt_cur.next();
      const ForwardPass pass = model.forward(gather(targets_.inputs, rows));
      Matrix d_p, d_f;
      if (use_mi) {
        losses.mi = loss_mi(pass.probabilities, &d_p);
        d_p *= w.mi;
      }
      if (use_self) {
        SelfLoss self;
        if (proto) {
          const IndexList src_rows = src_cur.next();
          const ForwardPass src_pass = model.forward(gather(all_source_, src_rows));
          std::vector<int> src_clusters, tgt_clusters;
          for (Index r : src_rows)
            src_clusters.push_back(state_.prototypes.source_clusters[static_cast<std::size_t>(r)]);
          for (Index r : rows)
            tgt_clusters.push_back(state_.prototypes.target_clusters[static_cast<std::size_t>(r)]);
          self = loss_self_proto(src_pass.features, src_clusters, pass.features, tgt_clusters,
                                 state_.prototypes, w.temperature);
          model.backward(src_pass, none, w.self * self.d_source, grad);
        } else {
          self = loss_self_simplified(state_.attention_centers, pass.features, w.temperature);
        }
        losses.self = self.value;
        d_f = w.self * self.d_target;
      }
      model.backward(pass, d_p, d_f, grad);
    }

    auto mixed_step = [&](BatchCursor& cur, const Matrix& inputs, const Matrix& labels,
                          double weight) -> double {
      const IndexList rows = cur.next();
      const ForwardPass pass = model.forward(gather(inputs, rows));
      Matrix d_p;
      const double value = soft_cross_entropy(pass.probabilities, gather(labels, rows), &d_p);
      model.backward(pass, weight * d_p, none, grad);
      return value;
    };
    if (xvd_cur.active()) losses.xvd = mixed_step(xvd_cur, xvd_inputs, xvd_labels, w.xvd);
    if (ivd_cur.active()) losses.ivd = mixed_step(ivd_cur, ivd_inputs, ivd_labels, w.ivd);

    const double total = total_loss(losses, w);

    if (warmup) {
      grad.tail(head_size).setZero();
      state_.velocity.tail(head_size).setZero();
    }
    state_.velocity = hp_.momentum * state_.velocity + grad;
    model.parameters() -= hp_.learning_rate * state_.velocity;

    epoch_losses.cls += losses.cls.value_or(0.0);
    epoch_losses.mi += losses.mi.value_or(0.0);
    epoch_losses.self += losses.self.value_or(0.0);
    epoch_losses.xvd += losses.xvd.value_or(0.0);
    epoch_losses.ivd += losses.ivd.value_or(0.0);
    epoch_losses.total += total;
  }

  epoch_losses.steps = steps;
  if (steps > 0) {
    const double n = static_cast<double>(steps);
    epoch_losses.cls /= n;
    epoch_losses.mi /= n;
    epoch_losses.self /= n;
    epoch_losses.xvd /= n;
    epoch_losses.ivd /= n;
    epoch_losses.total /= n;
  }
  ++state_.epoch;
  state_.refreshed = false;
  return epoch_losses;
}

}  // namespace fuda
