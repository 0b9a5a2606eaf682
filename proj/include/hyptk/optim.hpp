#pragma once

// Riemannian SGD and Adam over mixed parameter sets. Manifold parameters move
// along exponential maps and carry their momentum by parallel transport;
// Euclidean parameters (including those on the Euclidean manifold) follow the
// standard update rules exactly.

#include <cstdint>
#include <vector>

#include "hyptk/nn.hpp"

namespace hyp::optim {

struct SlotState {
  std::vector<double> momentum;
  // One entry per coordinate for Euclidean parameters, a single norm-based
  // entry for ball parameters.
  std::vector<double> second_moment;
  std::int64_t steps = 0;
};

class Optimizer {
 public:
  // Claims every parameter; a parameter can belong to one optimizer at a time.
  Optimizer(std::vector<nn::ParamRef> params, double lr);
  virtual ~Optimizer();
  Optimizer(const Optimizer&) = delete;
  Optimizer& operator=(const Optimizer&) = delete;

  // Throws ContractError if any parameter has no gradient slot.
  void step();
  // Fills every gradient slot with zeros.
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr);

  const std::vector<nn::ParamRef>& params() const { return params_; }
  std::vector<SlotState>& state() { return state_; }
  const std::vector<SlotState>& state() const { return state_; }

 protected:
  virtual void update_flat(SlotState& s, std::span<double> x, std::span<const double> g) = 0;
  // x and g as detached tensors; returns the new point and updates s.momentum.
  virtual Tensor update_manifold(SlotState& s, const Manifold& m, std::int64_t dim,
                                 const Tensor& x, const Tensor& g) = 0;

  std::vector<nn::ParamRef> params_;
  std::vector<SlotState> state_;
  double lr_;
};

class RSGD final : public Optimizer {
 public:
  RSGD(std::vector<nn::ParamRef> params, double lr, double momentum = 0.9);
  double momentum() const { return mu_; }

 private:
  void update_flat(SlotState& s, std::span<double> x, std::span<const double> g) override;
  Tensor update_manifold(SlotState& s, const Manifold& m, std::int64_t dim, const Tensor& x,
                         const Tensor& g) override;

  double mu_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class RAdam final : public Optimizer {
 public:
  RAdam(std::vector<nn::ParamRef> params, double lr, AdamOptions options = {});
  const AdamOptions& options() const { return opt_; }

 private:
  void update_flat(SlotState& s, std::span<double> x, std::span<const double> g) override;
  Tensor update_manifold(SlotState& s, const Manifold& m, std::int64_t dim, const Tensor& x,
                         const Tensor& g) override;

  AdamOptions opt_;
};

// Multiplies the learning rate by gamma once every `every` epochs.
class StepDecay {
 public:
  StepDecay(Optimizer& optimizer, double gamma, std::int64_t every);
  void epoch_end();
  std::int64_t epochs() const { return epochs_; }
  void set_epochs(std::int64_t n) { epochs_ = n; }

 private:
  Optimizer& optimizer_;
  double gamma_;
  std::int64_t every_;
  std::int64_t epochs_ = 0;
};

}  // namespace hyp::optim
