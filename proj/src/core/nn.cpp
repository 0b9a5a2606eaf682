#include "hyptk/nn.hpp"

#include <algorithm>
#include <cmath>

#include "hyptk/errors.hpp"

namespace hyp::nn {

namespace {

std::int64_t conv_out(std::int64_t in, std::int64_t kernel, std::int64_t stride,
                      std::int64_t padding, const char* what) {
  const std::int64_t span = in + 2 * padding;
  if (kernel < 1 || stride < 1 || padding < 0 || span < kernel) {
    throw ShapeError(std::string(what) + ": extent " + std::to_string(in) +
                     " does not admit kernel " + std::to_string(kernel));
  }
  return (span - kernel) / stride + 1;
}

void require_feature_map(const ManifoldTensor& x, const char* what) {
  if (x.tensor().rank() != 4 || x.man_dim() != 1) {
    throw ShapeError(std::string(what) + " expects N x C x H x W with man_dim 1, got " +
                     shape_str(x.shape()) + " with man_dim " + std::to_string(x.man_dim()));
  }
}

// Shape that places a length-n vector on the manifold axis of a tensor whose
// man_dim sits `trail` axes from the end.
Shape along_axis(std::int64_t n, std::int64_t trail) {
  Shape s(static_cast<std::size_t>(trail), 1);
  s[0] = n;
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

void Module::collect(std::vector<ParamRef>&, const std::string&) const {}

std::vector<ParamRef> Module::parameters(const std::string& prefix) const {
  std::vector<ParamRef> out;
  collect(out, prefix);
  return out;
}

void Module::init_parameters(std::mt19937_64&) {}

void Module::check_input(const ManifoldTensor& x, std::int64_t expected_dim,
                         const char* layer) const {
  if (x.manifold() != manifold_) {
    throw ManifoldMismatchError(std::string(layer) + ": input on " + x.manifold()->name() +
                                " but layer on " + manifold_->name());
  }
  if (expected_dim >= 0 && x.point_dim() != expected_dim) {
    throw DimensionError(std::string(layer) + ": expected manifold dimension " +
                         std::to_string(expected_dim) + ", got " +
                         std::to_string(x.point_dim()));
  }
}

ManifoldTensor lift_to_manifold(const Tensor& x, const ManifoldPtr& manifold,
                                std::int64_t man_dim) {
  return expmap(TangentTensor(x, manifold, std::nullopt, man_dim));
}

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& v : t.mutable_data()) v = dist(rng);
}

void fill_point_noise(Tensor& t, const Manifold& manifold, std::int64_t man_dim, double stddev,
                      std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> noise(static_cast<std::size_t>(t.size()));
  for (double& v : noise) v = dist(rng);
  NoGradScope no_grad;
  const Tensor point = manifold.expmap0(Tensor(t.shape(), std::move(noise)), man_dim);
  std::copy(point.data().begin(), point.data().end(), t.mutable_data().begin());
}

// ---------------------------------------------------------------------------

HLinear::HLinear(std::int64_t in_features, std::int64_t out_features, ManifoldPtr manifold)
    : Module(std::move(manifold)),
      in_(in_features),
      out_(out_features),
      weight_(Tensor::zeros({out_features, in_features}, true)),
      bias_(Tensor::zeros({out_features}), manifold_, 0) {
  if (in_features < 1 || out_features < 1) throw ShapeError("HLinear: extents must be positive");
}

ManifoldTensor HLinear::forward(const ManifoldTensor& x) {
  check_input(x, in_, "HLinear");
  const ManifoldTensor y = mobius_matvec(weight_, x);
  const std::int64_t trail = x.tensor().rank() - x.man_dim();
  const ManifoldTensor b =
      ManifoldTensor::trusted(reshape(bias_.tensor(), along_axis(out_, trail)), manifold_, 0);
  return mobius_add(y, b);
}

void HLinear::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight_, nullptr, -1});
  out.push_back({prefix + "bias", bias_.tensor(), manifold_, 0});
}

void HLinear::init_parameters(std::mt19937_64& rng) {
  fill_uniform(weight_, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
  fill_point_noise(bias_.tensor_mut(), *manifold_, 0, 0.01, rng);
}

// ---------------------------------------------------------------------------

HConv2d::HConv2d(std::int64_t in_channels, std::int64_t out_channels, Conv2dOptions options,
                 ManifoldPtr manifold)
    : Module(manifold),
      in_channels_(in_channels),
      out_channels_(out_channels),
      options_(options),
      linear_(in_channels * options.kernel * options.kernel, out_channels, manifold) {}

ManifoldTensor HConv2d::forward(const ManifoldTensor& x) {
  require_feature_map(x, "HConv2d");
  check_input(x, in_channels_, "HConv2d");
  const auto& s = x.shape();
  const std::int64_t k = options_.kernel;
  const std::int64_t oh = conv_out(s[2], k, options_.stride, options_.padding, "HConv2d");
  const std::int64_t ow = conv_out(s[3], k, options_.stride, options_.padding, "HConv2d");

  Tensor cols = unfold2d(manifold_->logmap0(x.tensor(), 1), {k, k},
                         {options_.stride, options_.stride},
                         {options_.padding, options_.padding});
  if (options_.beta_concat) {
    const double scale = manifold_->concat_scale(in_channels_ * k * k, in_channels_);
    if (scale != 1.0) cols = cols * scale;
  }
  const ManifoldTensor patches =
      ManifoldTensor::trusted(manifold_->expmap0(cols, 1), manifold_, 1);
  const ManifoldTensor y = linear_.forward(patches);
  return ManifoldTensor::trusted(reshape(y.tensor(), {s[0], out_channels_, oh, ow}), manifold_,
                                 1);
}

void HConv2d::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  linear_.collect(out, prefix);
}

// ---------------------------------------------------------------------------

ManifoldTensor HReLU::forward(const ManifoldTensor& x) {
  check_input(x, -1, "HReLU");
  const std::int64_t d = x.man_dim();
  return ManifoldTensor::trusted(
      manifold_->expmap0(relu(manifold_->logmap0(x.tensor(), d)), d), manifold_, d);
}

// ---------------------------------------------------------------------------

HPool2d::HPool2d(PoolKind kind, std::int64_t window, std::int64_t stride, ManifoldPtr manifold)
    : Module(std::move(manifold)), kind_(kind), window_(window), stride_(stride) {}

ManifoldTensor HPool2d::forward(const ManifoldTensor& x) {
  require_feature_map(x, "HPool2d");
  check_input(x, -1, "HPool2d");
  const auto& s = x.shape();
  const std::int64_t oh = conv_out(s[2], window_, stride_, 0, "HPool2d");
  const std::int64_t ow = conv_out(s[3], window_, stride_, 0, "HPool2d");
  const Shape windows{s[0], s[1], window_ * window_, oh * ow};
  const Size2 win{window_, window_};
  const Size2 step{stride_, stride_};

  Tensor out;
  if (kind_ == PoolKind::kMax) {
    const Tensor cols = reshape(unfold2d(manifold_->logmap0(x.tensor(), 1), win, step), windows);
    out = manifold_->expmap0(amax(cols, 2), 1);
  } else {
    const Tensor cols = reshape(unfold2d(x.tensor(), win, step), windows);
    out = squeeze(manifold_->frechet_mean(cols, 2, 1), 2);
  }
  return ManifoldTensor::trusted(reshape(out, {s[0], s[1], oh, ow}), manifold_, 1);
}

// ---------------------------------------------------------------------------

HBatchNorm::HBatchNorm(std::int64_t features, ManifoldPtr manifold, double momentum)
    : Module(std::move(manifold)),
      features_(features),
      momentum_(momentum),
      beta_(Tensor::zeros({features}), manifold_, 0),
      gamma_(Tensor::scalar(1.0, true)),
      running_mean_(Tensor::zeros({1, features})) {
  if (features < 1) throw ShapeError("HBatchNorm: feature count must be positive");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw ConfigError("HBatchNorm: momentum in (0, 1]");
}

ManifoldTensor HBatchNorm::forward(const ManifoldTensor& x) {
  check_input(x, features_, "HBatchNorm");
  if (x.man_dim() != 1 || (x.tensor().rank() != 2 && x.tensor().rank() != 4)) {
    throw ShapeError("HBatchNorm expects N x D or N x C x H x W with man_dim 1, got " +
                     shape_str(x.shape()));
  }
  if (x.tensor().rank() == 2) return normalize(x);
  const auto& s = x.shape();
  const Tensor rows = reshape(permute(x.tensor(), {0, 2, 3, 1}), {-1, features_});
  const ManifoldTensor y = normalize(ManifoldTensor::trusted(rows, manifold_, 1));
  const Tensor back = permute(reshape(y.tensor(), {s[0], s[2], s[3], features_}), {0, 3, 1, 2});
  return ManifoldTensor::trusted(back, manifold_, 1);
}

ManifoldTensor HBatchNorm::normalize(const ManifoldTensor& x) {
  const ManifoldTensor beta =
      ManifoldTensor::trusted(reshape(beta_.tensor(), {1, features_}), manifold_, 1);
  ManifoldTensor mu = ManifoldTensor::trusted(running_mean_, manifold_, 1);
  Tensor var = Tensor::scalar(running_var_);
  if (training_) {
    if (x.shape()[0] < 2) throw ContractError("HBatchNorm: training needs a batch of at least 2");
    mu = frechet_mean(x, 0);
    var = frechet_variance(x, mu, 0);
    NoGradScope no_grad;
    const Tensor rm = running_mean_;
    const Tensor step = manifold_->logmap(rm, mu.tensor().detach(), 1) * momentum_;
    running_mean_ = manifold_->project(manifold_->expmap(rm, step, 1), 1);
    running_var_ = (1.0 - momentum_) * running_var_ + momentum_ * var.item();
  }
  const TangentTensor v = parallel_transport(logmap(mu, x), beta);
  const Tensor scaled = v.tensor() * (gamma_ / sqrt(var + kEps));
  return expmap(TangentTensor(scaled, manifold_, beta, 1));
}

void HBatchNorm::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  out.push_back({prefix + "beta", beta_.tensor(), manifold_, 0});
  out.push_back({prefix + "gamma", gamma_, nullptr, -1});
}

void HBatchNorm::init_parameters(std::mt19937_64& rng) {
  fill_point_noise(beta_.tensor_mut(), *manifold_, 0, 0.01, rng);
  gamma_.mutable_data()[0] = 1.0;
}

// ---------------------------------------------------------------------------

ManifoldTensor HFlatten::forward(const ManifoldTensor& x) {
  check_input(x, -1, "HFlatten");
  if (x.tensor().rank() == 2 && x.man_dim() == 1) return x;
  require_feature_map(x, "HFlatten");
  const auto& s = x.shape();
  const std::int64_t total = s[1] * s[2] * s[3];
  Tensor v = reshape(manifold_->logmap0(x.tensor(), 1), {s[0], total});
  if (beta_concat_) {
    const double scale = manifold_->concat_scale(total, s[1]);
    if (scale != 1.0) v = v * scale;
  }
  return ManifoldTensor::trusted(manifold_->expmap0(v, 1), manifold_, 1);
}

// ---------------------------------------------------------------------------

HEmbedding::HEmbedding(std::int64_t num_entries, std::int64_t dim, ManifoldPtr manifold)
    : Module(std::move(manifold)), table_(Tensor::zeros({num_entries, dim}), manifold_, 1) {}

ManifoldTensor HEmbedding::lookup(std::span<const std::int64_t> indices) const {
  return ManifoldTensor::trusted(index_select(table_.tensor(), 0, indices), manifold_, 1);
}

ManifoldTensor HEmbedding::forward(const ManifoldTensor& x) {
  check_input(x, table_.point_dim(), "HEmbedding");
  return table_;
}

void HEmbedding::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  out.push_back({prefix + "table", table_.tensor(), manifold_, 1});
}

void HEmbedding::init_parameters(std::mt19937_64& rng) {
  fill_point_noise(table_.tensor_mut(), *manifold_, 1, 0.01, rng);
}

// ---------------------------------------------------------------------------

HMLRHead::HMLRHead(std::int64_t features, std::int64_t classes, ManifoldPtr manifold)
    : features_(features),
      classes_(classes),
      manifold_(std::move(manifold)),
      points_(Tensor::zeros({classes, features}), manifold_, 1),
      normals_(Tensor::full({classes, features}, 1.0, true)) {
  if (classes < 2) throw ConfigError("MLR head needs at least 2 classes");
}

Tensor HMLRHead::forward(const ManifoldTensor& x) const {
  return mlr_logits(x, points_, normals_);
}

void HMLRHead::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  out.push_back({prefix + "points", points_.tensor(), manifold_, 1});
  out.push_back({prefix + "normals", normals_, nullptr, -1});
}

void HMLRHead::init_parameters(std::mt19937_64& rng) {
  fill_point_noise(points_.tensor_mut(), *manifold_, 1, 0.01, rng);
  fill_uniform(normals_, 1.0 / std::sqrt(static_cast<double>(features_)), rng);
}

// ---------------------------------------------------------------------------

Sequential& Sequential::add(std::unique_ptr<Module> layer) {
  if (!layer) throw ContractError("Sequential: null layer");
  if (layer->manifold() != manifold_) {
    throw ManifoldMismatchError("Sequential: layer on " + layer->manifold()->name() +
                                " but model on " + manifold_->name());
  }
  layers_.push_back(std::move(layer));
  return *this;
}

ManifoldTensor Sequential::forward(const ManifoldTensor& x) {
  check_input(x, -1, "Sequential");
  ManifoldTensor h = x;
  for (auto& layer : layers_) h = layer->forward(h);
  return h;
}

void Sequential::collect(std::vector<ParamRef>& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect(out, prefix + std::to_string(i) + ".");
  }
}

void Sequential::init_parameters(std::mt19937_64& rng) {
  for (auto& layer : layers_) layer->init_parameters(rng);
}

void Sequential::set_training(bool on) {
  Module::set_training(on);
  for (auto& layer : layers_) layer->set_training(on);
}

// ---------------------------------------------------------------------------

ConvNet::ConvNet(const ConvNetConfig& config, ManifoldPtr manifold)
    : config_(config), body_(manifold), head_(config.hidden2, config.classes, manifold) {
  const auto& c = config_;
  const std::int64_t s1 = conv_out(c.image_size, c.kernel, 1, 0, "ConvNet conv1") / c.pool;
  const std::int64_t s2 = s1 < c.kernel ? 0 : (s1 - c.kernel + 1) / c.pool;
  if (s2 < 1) {
    throw ConfigError("ConvNet: image size " + std::to_string(c.image_size) +
                      " too small for kernel " + std::to_string(c.kernel) + " and pool " +
                      std::to_string(c.pool));
  }
  const Conv2dOptions conv{c.kernel, 1, 0, c.beta_concat};
  body_.emplace<HConv2d>(c.in_channels, c.conv1_channels, conv, manifold);
  body_.emplace<HReLU>(manifold);
  body_.emplace<HPool2d>(PoolKind::kMax, c.pool, c.pool, manifold);
  body_.emplace<HConv2d>(c.conv1_channels, c.conv2_channels, conv, manifold);
  body_.emplace<HReLU>(manifold);
  body_.emplace<HPool2d>(PoolKind::kMax, c.pool, c.pool, manifold);
  body_.emplace<HFlatten>(manifold, c.beta_concat);
  body_.emplace<HLinear>(c.conv2_channels * s2 * s2, c.hidden1, manifold);
  body_.emplace<HReLU>(manifold);
  body_.emplace<HLinear>(c.hidden1, c.hidden2, manifold);
  body_.emplace<HReLU>(manifold);
}

Tensor ConvNet::forward(const ManifoldTensor& x) { return head_.forward(body_.forward(x)); }

std::vector<ParamRef> ConvNet::parameters() const {
  std::vector<ParamRef> out;
  body_.collect(out, "body.");
  head_.collect(out, "head.");
  return out;
}

void ConvNet::init_parameters(std::mt19937_64& rng) {
  body_.init_parameters(rng);
  head_.init_parameters(rng);
}

// ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels) {
  if (logits.rank() != 2) throw ShapeError("cross_entropy expects N x K logits");
  const std::int64_t n = logits.dim(0);
  const std::int64_t k = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != n) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  }
  std::vector<double> shift(static_cast<std::size_t>(n));
  std::vector<double> onehot(static_cast<std::size_t>(n * k), 0.0);
  const auto z = logits.data();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ContractError("cross_entropy: label " + std::to_string(y) +
                                             " outside [0, " + std::to_string(k) + ")");
    const auto row = z.subspan(static_cast<std::size_t>(i * k), static_cast<std::size_t>(k));
    shift[static_cast<std::size_t>(i)] = *std::max_element(row.begin(), row.end());
    onehot[static_cast<std::size_t>(i * k + y)] = 1.0;
  }
  const Tensor shifted = logits - Tensor({n, 1}, std::move(shift));
  const Tensor lse = log(sum(exp(shifted), {1}));
  const Tensor picked = sum(shifted * Tensor({n, k}, std::move(onehot)), {1});
  return mean(lse - picked);
}

}  // namespace hyp::nn
