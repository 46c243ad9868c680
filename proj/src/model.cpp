#include "fuda/model.hpp"

#include "fuda/random.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fuda {

namespace {

constexpr Index kKernel = 3;
constexpr Index kStride = 2;
constexpr double kNormFloor = 1e-12;

Index conv_out_side(Index in_side) { return (in_side - kKernel) / kStride + 1; }

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

// One sample's patches: rows are output pixels, columns (channel, ky, kx).
Matrix im2col(const double* image, Index channels, Index side, Index out_side) {
  Matrix patches(out_side * out_side, channels * kKernel * kKernel);
  for (Index oy = 0; oy < out_side; ++oy)
    for (Index ox = 0; ox < out_side; ++ox) {
      const Index row = oy * out_side + ox;
      Index col = 0;
      for (Index ch = 0; ch < channels; ++ch)
        for (Index ky = 0; ky < kKernel; ++ky)
          for (Index kx = 0; kx < kKernel; ++kx)
            patches(row, col++) =
                image[ch * side * side + (oy * kStride + ky) * side + (ox * kStride + kx)];
    }
  return patches;
}

void col2im_add(const Matrix& d_patches, double* d_image, Index channels, Index side,
                Index out_side) {
  for (Index oy = 0; oy < out_side; ++oy)
    for (Index ox = 0; ox < out_side; ++ox) {
      const Index row = oy * out_side + ox;
      Index col = 0;
      for (Index ch = 0; ch < channels; ++ch)
        for (Index ky = 0; ky < kKernel; ++ky)
          for (Index kx = 0; kx < kKernel; ++kx)
            d_image[ch * side * side + (oy * kStride + ky) * side + (ox * kStride + kx)] +=
                d_patches(row, col++);
    }
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = (logits.colwise() - logits.rowwise().maxCoeff()).array().exp().matrix();
  p.array().colwise() /= p.rowwise().sum().array();
  return p;
}

constexpr char kMagic[8] = {'F', 'U', 'D', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_string(std::ostream& out, const std::string& s) {
  const std::uint64_t n = s.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof n);
  out.write(s.data(), static_cast<std::streamsize>(n));
}

std::string read_string(std::istream& in) {
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof n);
  if (!in || n > (1u << 20)) throw Error("corrupt checkpoint string");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

void ModelConfig::validate() const {
  if (num_classes < 1) throw Error("model: num_classes must be positive");
  if (feature_dim < 1) throw Error("model: feature_dim must be positive");
  if (backbone == Backbone::mlp) {
    if (input_dim < 1) throw Error("model: input_dim must be positive");
    for (Index h : hidden)
      if (h < 1) throw Error("model: hidden widths must be positive");
  } else {
    if (input_dim != 16 * 16) throw Error("model: conv16 backbone expects 256 inputs");
    if (conv_channels.size() != 2 || conv_channels[0] < 1 || conv_channels[1] < 1)
      throw Error("model: conv16 backbone needs two positive channel counts");
  }
}

std::string ModelConfig::fingerprint() const {
  std::ostringstream s;
  s << (backbone == Backbone::mlp ? "mlp" : "conv16") << ";in=" << input_dim << ";body=";
  const auto& widths = backbone == Backbone::mlp ? hidden : conv_channels;
  for (std::size_t i = 0; i < widths.size(); ++i) s << (i ? "," : "") << widths[i];
  s << ";df=" << feature_dim << ";c=" << num_classes
    << ";act=" << (activation == Activation::relu ? "relu" : "tanh");
  return s.str();
}

AdaptationModel::AdaptationModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  build_layers();
  initialize(seed);
}

void AdaptationModel::build_layers() {
  body_.clear();
  Index offset = 0;
  auto dense = [&](Index in, Index out) {
    body_.push_back({LayerKind::dense, in, out, offset});
    offset += in * out + out;
  };
  auto act = [&](Index size) { body_.push_back({LayerKind::activation, size, size, 0}); };

  Index width = config_.input_dim;
  if (config_.backbone == Backbone::mlp) {
    for (Index h : config_.hidden) {
      dense(width, h);
      act(h);
      width = h;
    }
  } else {
    Index side = 16, channels = 1;
    for (Index out_channels : config_.conv_channels) {
      const Index out_side = conv_out_side(side);
      Layer conv{LayerKind::conv, channels * side * side, out_channels * out_side * out_side, offset};
      conv.in_channels = channels;
      conv.out_channels = out_channels;
      conv.in_side = side;
      conv.out_side = out_side;
      body_.push_back(conv);
      offset += out_channels * channels * kKernel * kKernel + out_channels;
      act(conv.out_size);
      side = out_side;
      channels = out_channels;
    }
    width = channels * side * side;
  }
  dense(width, config_.feature_dim);
  head_offset_ = offset;
  offset += config_.feature_dim * config_.num_classes + config_.num_classes;
  params_ = Vector::Zero(offset);
}

void AdaptationModel::initialize(std::uint64_t seed) {
  Rng rng = make_rng(seed, Stream::init);
  auto fill = [&](Index offset, Index count, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index i = 0; i < count; ++i) params_(offset + i) = u(rng);
  };
  const double gain = config_.activation == Activation::relu ? std::sqrt(6.0) : std::sqrt(3.0);
  for (const Layer& layer : body_) {
    if (layer.kind == LayerKind::dense) {
      fill(layer.offset, layer.in_size * layer.out_size, gain / std::sqrt(double(layer.in_size)));
    } else if (layer.kind == LayerKind::conv) {
      const Index fan_in = layer.in_channels * kKernel * kKernel;
      fill(layer.offset, layer.out_channels * fan_in, gain / std::sqrt(double(fan_in)));
    }
  }
  fill(head_offset_, config_.feature_dim * config_.num_classes,
       std::sqrt(3.0) / std::sqrt(double(config_.feature_dim)));
}

ForwardPass AdaptationModel::forward(const Eigen::Ref<const Matrix>& inputs) const {
  if (inputs.rows() == 0) throw Error("forward: empty batch");
  if (inputs.cols() != config_.input_dim)
    throw Error("forward: input width " + std::to_string(inputs.cols()) + " does not match model " +
                std::to_string(config_.input_dim));
  ForwardPass pass;
  pass.layer_inputs.reserve(body_.size());
  Matrix x = inputs;
  const Index n = x.rows();
  for (const Layer& layer : body_) {
    pass.layer_inputs.push_back(x);
    switch (layer.kind) {
      case LayerKind::dense: {
        ConstMap w(params_.data() + layer.offset, layer.in_size, layer.out_size);
        Eigen::Map<const RowVector> b(params_.data() + layer.offset + layer.in_size * layer.out_size,
                                      layer.out_size);
        Matrix y = x * w;
        y.rowwise() += b;
        x = std::move(y);
        break;
      }
      case LayerKind::conv: {
        const Index fan_in = layer.in_channels * kKernel * kKernel;
        ConstMap w(params_.data() + layer.offset, layer.out_channels, fan_in);
        Eigen::Map<const Vector> b(params_.data() + layer.offset + layer.out_channels * fan_in,
                                   layer.out_channels);
        const Index pixels = layer.out_side * layer.out_side;
        Matrix y(n, layer.out_size);
        for (Index r = 0; r < n; ++r) {
          const Matrix patches = im2col(x.row(r).data(), layer.in_channels, layer.in_side,
                                        layer.out_side);
          Matrix out = w * patches.transpose();  // channels x pixels
          out.colwise() += b;
          y.row(r) = Eigen::Map<const RowVector>(out.data(), layer.out_channels * pixels);
        }
        x = std::move(y);
        break;
      }
      case LayerKind::activation:
        if (config_.activation == Activation::relu)
          x = x.cwiseMax(0.0);
        else
          x = x.array().tanh().matrix();
        break;
    }
  }
  pass.feature_norms = x.rowwise().norm().cwiseMax(kNormFloor);
  pass.features = x.array().colwise() / pass.feature_norms.array();
  pass.layer_inputs.push_back(std::move(x));

  ConstMap wh(params_.data() + head_offset_, config_.feature_dim, config_.num_classes);
  Eigen::Map<const RowVector> bh(params_.data() + head_offset_ + wh.size(), config_.num_classes);
  pass.logits = pass.features * wh;
  pass.logits.rowwise() += bh;
  pass.probabilities = softmax_rows(pass.logits);
  return pass;
}

Matrix AdaptationModel::classify_features(const Eigen::Ref<const Matrix>& features) const {
  if (features.cols() != config_.feature_dim) throw Error("classify_features: width mismatch");
  ConstMap wh(params_.data() + head_offset_, config_.feature_dim, config_.num_classes);
  Eigen::Map<const RowVector> bh(params_.data() + head_offset_ + wh.size(), config_.num_classes);
  Matrix logits = features * wh;
  logits.rowwise() += bh;
  return softmax_rows(logits);
}

void AdaptationModel::backward(const ForwardPass& pass, const Matrix& d_probabilities,
                               const Matrix& d_features, Eigen::Ref<Vector> grad) const {
  if (grad.size() != params_.size()) throw Error("backward: gradient size mismatch");
  const Index n = pass.features.rows();
  Matrix d_feat = Matrix::Zero(n, config_.feature_dim);
  if (d_features.size() != 0) {
    if (d_features.rows() != n || d_features.cols() != config_.feature_dim)
      throw Error("backward: feature gradient shape mismatch");
    d_feat += d_features;
  }
  if (d_probabilities.size() != 0) {
    if (d_probabilities.rows() != n || d_probabilities.cols() != config_.num_classes)
      throw Error("backward: probability gradient shape mismatch");
    const Matrix& p = pass.probabilities;
    const Vector dot = (d_probabilities.array() * p.array()).rowwise().sum();
    const Matrix d_logits = p.array() * (d_probabilities.array().colwise() - dot.array());
    ConstMap wh(params_.data() + head_offset_, config_.feature_dim, config_.num_classes);
    MutMap gw(grad.data() + head_offset_, config_.feature_dim, config_.num_classes);
    Eigen::Map<RowVector> gb(grad.data() + head_offset_ + wh.size(), config_.num_classes);
    gw.noalias() += pass.features.transpose() * d_logits;
    gb += d_logits.colwise().sum();
    d_feat.noalias() += d_logits * wh.transpose();
  }

  // Through f = z / |z|.
  const Vector radial = (d_feat.array() * pass.features.array()).rowwise().sum();
  Matrix dx = d_feat - (pass.features.array().colwise() * radial.array()).matrix();
  dx.array().colwise() /= pass.feature_norms.array();

  for (std::size_t li = body_.size(); li-- > 0;) {
    const Layer& layer = body_[li];
    const Matrix& x = pass.layer_inputs[li];
    switch (layer.kind) {
      case LayerKind::dense: {
        ConstMap w(params_.data() + layer.offset, layer.in_size, layer.out_size);
        MutMap gw(grad.data() + layer.offset, layer.in_size, layer.out_size);
        Eigen::Map<RowVector> gb(grad.data() + layer.offset + w.size(), layer.out_size);
        gw.noalias() += x.transpose() * dx;
        gb += dx.colwise().sum();
        dx = dx * w.transpose();
        break;
      }
      case LayerKind::conv: {
        const Index fan_in = layer.in_channels * kKernel * kKernel;
        const Index pixels = layer.out_side * layer.out_side;
        ConstMap w(params_.data() + layer.offset, layer.out_channels, fan_in);
        MutMap gw(grad.data() + layer.offset, layer.out_channels, fan_in);
        Eigen::Map<Vector> gb(grad.data() + layer.offset + w.size(), layer.out_channels);
        Matrix d_in = Matrix::Zero(n, layer.in_size);
        for (Index r = 0; r < n; ++r) {
          const Matrix patches =
              im2col(x.row(r).data(), layer.in_channels, layer.in_side, layer.out_side);
          Eigen::Map<const Matrix> d_out(dx.row(r).data(), layer.out_channels, pixels);
          gw.noalias() += d_out * patches;
          gb += d_out.rowwise().sum();
          const Matrix d_patches = d_out.transpose() * w;
          col2im_add(d_patches, d_in.row(r).data(), layer.in_channels, layer.in_side,
                     layer.out_side);
        }
        dx = std::move(d_in);
        break;
      }
      case LayerKind::activation:
        if (config_.activation == Activation::relu)
          dx = (x.array() > 0.0).select(dx, 0.0);
        else
          dx = dx.array() * (1.0 - x.array().tanh().square());
        break;
    }
  }
}

Snapshot AdaptationModel::extract_all(const Eigen::Ref<const Matrix>& inputs,
                                      Index batch_size) const {
  if (inputs.rows() == 0) throw Error("extract_all: empty dataset");
  if (batch_size < 1) throw Error("extract_all: batch size must be positive");
  Snapshot snap;
  snap.features.resize(inputs.rows(), config_.feature_dim);
  snap.predictions.resize(inputs.rows(), config_.num_classes);
  for (Index start = 0; start < inputs.rows(); start += batch_size) {
    const Index count = std::min(batch_size, inputs.rows() - start);
    const ForwardPass pass = forward(inputs.middleRows(start, count));
    snap.features.middleRows(start, count) = pass.features;
    snap.predictions.middleRows(start, count) = pass.probabilities;
  }
  return snap;
}

void AdaptationModel::save(const std::string& path, const std::string& run_fingerprint) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof kCheckpointVersion);
  write_string(out, config_.fingerprint());
  write_string(out, run_fingerprint);
  const std::uint64_t count = static_cast<std::uint64_t>(params_.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  if (!out) throw Error("failed writing checkpoint " + path);
}

namespace {

ModelConfig parse_fingerprint(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string field;
  while (std::getline(in, field, ';')) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) {
      if (field == "mlp") cfg.backbone = Backbone::mlp;
      else if (field == "conv16") cfg.backbone = Backbone::conv16;
      else throw Error("checkpoint: unknown backbone '" + field + "'");
      continue;
    }
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "in") cfg.input_dim = std::stoll(value);
    else if (key == "df") cfg.feature_dim = std::stoll(value);
    else if (key == "c") cfg.num_classes = std::stoi(value);
    else if (key == "act") cfg.activation = value == "tanh" ? Activation::tanh : Activation::relu;
    else if (key == "body") {
      std::vector<Index> widths;
      std::istringstream ws(value);
      std::string w;
      while (std::getline(ws, w, ','))
        if (!w.empty()) widths.push_back(std::stoll(w));
      if (cfg.backbone == Backbone::mlp) cfg.hidden = widths;
      else cfg.conv_channels = widths;
    }
  }
  return cfg;
}

}  // namespace

AdaptationModel AdaptationModel::load(const std::string& path, std::string* run_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw Error(path + " is not a checkpoint");
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kCheckpointVersion)
    throw Error("checkpoint version " + std::to_string(version) + " is not supported");
  const std::string fingerprint = read_string(in);
  const std::string run = read_string(in);
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);

  AdaptationModel model;
  model.config_ = parse_fingerprint(fingerprint);
  model.config_.validate();
  model.build_layers();
  if (static_cast<std::uint64_t>(model.params_.size()) != count)
    throw Error("checkpoint parameter count does not match its architecture");
  in.read(reinterpret_cast<char*>(model.params_.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (!in) throw Error("truncated checkpoint " + path);
  if (run_fingerprint) *run_fingerprint = run;
  return model;
}

}  // namespace fuda
