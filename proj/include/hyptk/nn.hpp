#pragma once

// Manifold-agnostic layers. Each layer is built with a manifold and computes
// its forward pass through that manifold's operations, so on the Euclidean
// manifold every layer reduces to its ordinary counterpart.

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hyptk/manifold_tensor.hpp"

namespace hyp::nn {

// A trainable tensor as seen by optimizers and checkpoints. `manifold` is
// null for plain Euclidean parameters (weights, curvature).
struct ParamRef {
  std::string name;
  Tensor tensor;
  ManifoldPtr manifold;
  std::int64_t man_dim = -1;
};

class Module {
 public:
  explicit Module(ManifoldPtr manifold) : manifold_(std::move(manifold)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  virtual ManifoldTensor forward(const ManifoldTensor& x) = 0;
  ManifoldTensor operator()(const ManifoldTensor& x) { return forward(x); }

  virtual void collect(std::vector<ParamRef>& out, const std::string& prefix) const;
  std::vector<ParamRef> parameters(const std::string& prefix = "") const;
  // Uniform(+-1/sqrt(fan_in)) weights, points at exp0 of N(0, 0.01^2) noise.
  virtual void init_parameters(std::mt19937_64& rng);
  virtual void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }

  const ManifoldPtr& manifold() const { return manifold_; }

 protected:
  // Throws unless x lives on this layer's manifold with the expected extent.
  void check_input(const ManifoldTensor& x, std::int64_t expected_dim, const char* layer) const;

  ManifoldPtr manifold_;
  bool training_ = true;
};

// Wraps x as origin tangent vectors and maps them with exp0.
ManifoldTensor lift_to_manifold(const Tensor& x, const ManifoldPtr& manifold,
                                std::int64_t man_dim = -1);

void fill_uniform(Tensor& t, double bound, std::mt19937_64& rng);
void fill_point_noise(Tensor& t, const Manifold& manifold, std::int64_t man_dim, double stddev,
                      std::mt19937_64& rng);

class HLinear : public Module {
 public:
  HLinear(std::int64_t in_features, std::int64_t out_features, ManifoldPtr manifold);

  ManifoldTensor forward(const ManifoldTensor& x) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const override;
  void init_parameters(std::mt19937_64& rng) override;

  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }
  Tensor& weight() { return weight_; }
  ManifoldParameter& bias() { return bias_; }

 private:
  std::int64_t in_;
  std::int64_t out_;
  Tensor weight_;  // out x in
  ManifoldParameter bias_;
};

struct Conv2dOptions {
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t padding = 0;
  // Beta-function rescaling of concatenated tangent vectors; plain
  // concatenation when false.
  bool beta_concat = true;
};

class HConv2d : public Module {
 public:
  HConv2d(std::int64_t in_channels, std::int64_t out_channels, Conv2dOptions options,
          ManifoldPtr manifold);

  ManifoldTensor forward(const ManifoldTensor& x) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const override;
  void init_parameters(std::mt19937_64& rng) override { linear_.init_parameters(rng); }

  HLinear& linear() { return linear_; }
  const Conv2dOptions& options() const { return options_; }

 private:
  std::int64_t in_channels_;
  std::int64_t out_channels_;
  Conv2dOptions options_;
  HLinear linear_;
};

class HReLU : public Module {
 public:
  explicit HReLU(ManifoldPtr manifold) : Module(std::move(manifold)) {}
  ManifoldTensor forward(const ManifoldTensor& x) override;
};

enum class PoolKind { kMax, kAvg };

class HPool2d : public Module {
 public:
  HPool2d(PoolKind kind, std::int64_t window, std::int64_t stride, ManifoldPtr manifold);
  ManifoldTensor forward(const ManifoldTensor& x) override;

 private:
  PoolKind kind_;
  std::int64_t window_;
  std::int64_t stride_;
};

class HBatchNorm : public Module {
 public:
  static constexpr double kEps = 1e-5;

  HBatchNorm(std::int64_t features, ManifoldPtr manifold, double momentum = 0.1);

  // Accepts N x D (man_dim 1) or N x C x H x W (man_dim 1).
  ManifoldTensor forward(const ManifoldTensor& x) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const override;
  void init_parameters(std::mt19937_64& rng) override;

  ManifoldParameter& beta() { return beta_; }
  Tensor& gamma() { return gamma_; }
  const Tensor& running_mean() const { return running_mean_; }
  double running_var() const { return running_var_; }

 private:
  ManifoldTensor normalize(const ManifoldTensor& x);

  std::int64_t features_;
  double momentum_;
  ManifoldParameter beta_;
  Tensor gamma_;
  Tensor running_mean_;
  double running_var_ = 1.0;
};

class HFlatten : public Module {
 public:
  explicit HFlatten(ManifoldPtr manifold, bool beta_concat = true)
      : Module(std::move(manifold)), beta_concat_(beta_concat) {}
  ManifoldTensor forward(const ManifoldTensor& x) override;

 private:
  bool beta_concat_;
};

class HEmbedding : public Module {
 public:
  HEmbedding(std::int64_t num_entries, std::int64_t dim, ManifoldPtr manifold);

  ManifoldTensor lookup(std::span<const std::int64_t> indices) const;
  // Returns the full table (the input is ignored beyond its manifold check).
  ManifoldTensor forward(const ManifoldTensor& x) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const override;
  void init_parameters(std::mt19937_64& rng) override;

  ManifoldParameter& table() { return table_; }
  const ManifoldParameter& table() const { return table_; }

 private:
  ManifoldParameter table_;
};

// Hyperbolic multinomial logistic regression head producing plain logits.
class HMLRHead {
 public:
  HMLRHead(std::int64_t features, std::int64_t classes, ManifoldPtr manifold);

  Tensor forward(const ManifoldTensor& x) const;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const;
  void init_parameters(std::mt19937_64& rng);

  ManifoldParameter& points() { return points_; }
  Tensor& normals() { return normals_; }

 private:
  std::int64_t features_;
  std::int64_t classes_;
  ManifoldPtr manifold_;
  ManifoldParameter points_;  // K x D
  Tensor normals_;            // K x D
};

class Sequential : public Module {
 public:
  explicit Sequential(ManifoldPtr manifold) : Module(std::move(manifold)) {}

  // Throws ManifoldMismatchError if the layer uses another manifold instance.
  Sequential& add(std::unique_ptr<Module> layer);
  template <class L, class... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    add(std::move(layer));
    return ref;
  }

  ManifoldTensor forward(const ManifoldTensor& x) override;
  void collect(std::vector<ParamRef>& out, const std::string& prefix) const override;
  void init_parameters(std::mt19937_64& rng) override;
  void set_training(bool on) override;

  std::size_t size() const { return layers_.size(); }
  Module& operator[](std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

// Small convnet: conv-relu-pool twice, two hidden linear layers, MLR head.
struct ConvNetConfig {
  std::int64_t in_channels = 1;
  std::int64_t image_size = 16;
  std::int64_t conv1_channels = 6;
  std::int64_t conv2_channels = 16;
  std::int64_t kernel = 5;
  std::int64_t pool = 2;
  std::int64_t hidden1 = 120;
  std::int64_t hidden2 = 84;
  std::int64_t classes = 2;
  bool beta_concat = true;
};

class ConvNet {
 public:
  ConvNet(const ConvNetConfig& config, ManifoldPtr manifold);

  // x: N x C x H x W points (man_dim 1) -> N x classes logits.
  Tensor forward(const ManifoldTensor& x);
  std::vector<ParamRef> parameters() const;
  void init_parameters(std::mt19937_64& rng);
  void set_training(bool on) { body_.set_training(on); }

  const ConvNetConfig& config() const { return config_; }
  Sequential& body() { return body_; }
  HMLRHead& head() { return head_; }

 private:
  ConvNetConfig config_;
  Sequential body_;
  HMLRHead head_;
};

// Mean of -log softmax(logits)[label] over the batch.
Tensor cross_entropy(const Tensor& logits, std::span<const std::int64_t> labels);

}  // namespace hyp::nn
