#include "hyptk/optim.hpp"

#include <cmath>

#include "hyptk/errors.hpp"

namespace hyp::optim {

namespace {

bool flat(const nn::ParamRef& p) {
  return !p.manifold || p.manifold->kind() == ManifoldKind::kEuclidean;
}

Tensor detached_copy(const Shape& shape, std::span<const double> values) {
  return Tensor(shape, std::vector<double>(values.begin(), values.end()));
}

}  // namespace

Optimizer::Optimizer(std::vector<nn::ParamRef> params, double lr)
    : params_(std::move(params)), state_(params_.size()), lr_(lr) {
  set_lr(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& impl = params_[i].tensor.impl();
    const char* problem = nullptr;
    if (!params_[i].tensor.requires_grad()) problem = " does not require a gradient";
    if (impl.owner != nullptr && impl.owner != this) problem = " already belongs to an optimizer";
    if (problem) {
      for (std::size_t j = 0; j < i; ++j) params_[j].tensor.impl().owner = nullptr;
      throw ContractError("parameter " + params_[i].name + problem);
    }
    impl.owner = this;
    const auto n = static_cast<std::size_t>(params_[i].tensor.size());
    state_[i].momentum.assign(n, 0.0);
    state_[i].second_moment.assign(flat(params_[i]) ? n : 1, 0.0);
  }
}

Optimizer::~Optimizer() {
  for (auto& p : params_) {
    if (p.tensor.impl().owner == this) p.tensor.impl().owner = nullptr;
  }
}

void Optimizer::set_lr(double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  lr_ = lr;
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) throw ContractError("parameter " + p.name + " has no gradient");
  }
  NoGradScope no_grad;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto& s = state_[i];
    ++s.steps;
    auto x = p.tensor.mutable_data();
    const auto g = p.tensor.grad_data();
    if (flat(p)) {
      update_flat(s, x, g);
      continue;
    }
    const std::int64_t dim = normalize_axis(p.man_dim, p.tensor.rank());
    const Tensor next = update_manifold(s, *p.manifold, dim, detached_copy(p.tensor.shape(), x),
                                        detached_copy(p.tensor.shape(), g));
    std::copy(next.data().begin(), next.data().end(), x.begin());
  }
}

// ---------------------------------------------------------------------------

RSGD::RSGD(std::vector<nn::ParamRef> params, double lr, double momentum)
    : Optimizer(std::move(params), lr), mu_(momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
}

void RSGD::update_flat(SlotState& s, std::span<double> x, std::span<const double> g) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    s.momentum[j] = mu_ * s.momentum[j] + g[j];
    x[j] -= lr_ * s.momentum[j];
  }
}

Tensor RSGD::update_manifold(SlotState& s, const Manifold& m, std::int64_t dim, const Tensor& x,
                             const Tensor& g) {
  const Tensor h = m.egrad_to_rgrad(x, g, dim);
  const Tensor mom = detached_copy(x.shape(), s.momentum) * mu_ + h;
  const Tensor next = m.project(m.expmap(x, mom * (-lr_), dim), dim);
  const Tensor moved = m.parallel_transport(x, next, mom, dim);
  s.momentum.assign(moved.data().begin(), moved.data().end());
  return next;
}

// ---------------------------------------------------------------------------

RAdam::RAdam(std::vector<nn::ParamRef> params, double lr, AdamOptions options)
    : Optimizer(std::move(params), lr), opt_(options) {
  if (!(opt_.beta1 >= 0.0 && opt_.beta1 < 1.0) || !(opt_.beta2 >= 0.0 && opt_.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(opt_.eps > 0.0)) throw ConfigError("Adam eps must be positive");
}

void RAdam::update_flat(SlotState& s, std::span<double> x, std::span<const double> g) {
  const double t = static_cast<double>(s.steps);
  const double c1 = 1.0 - std::pow(opt_.beta1, t);
  const double c2 = 1.0 - std::pow(opt_.beta2, t);
  for (std::size_t j = 0; j < x.size(); ++j) {
    s.momentum[j] = opt_.beta1 * s.momentum[j] + (1.0 - opt_.beta1) * g[j];
    s.second_moment[j] = opt_.beta2 * s.second_moment[j] + (1.0 - opt_.beta2) * g[j] * g[j];
    const double m_hat = s.momentum[j] / c1;
    const double v_hat = s.second_moment[j] / c2;
    x[j] -= lr_ * m_hat / (std::sqrt(v_hat) + opt_.eps);
  }
}

Tensor RAdam::update_manifold(SlotState& s, const Manifold& m, std::int64_t dim, const Tensor& x,
                              const Tensor& g) {
  const double t = static_cast<double>(s.steps);
  const Tensor h = m.egrad_to_rgrad(x, g, dim);
  const Tensor mom =
      detached_copy(x.shape(), s.momentum) * opt_.beta1 + h * (1.0 - opt_.beta1);
  const double hh = sum(m.inner(x, h, h, dim)).item();
  double& v = s.second_moment[0];
  v = opt_.beta2 * v + (1.0 - opt_.beta2) * hh;
  const double m_scale = 1.0 / (1.0 - std::pow(opt_.beta1, t));
  const double v_hat = v / (1.0 - std::pow(opt_.beta2, t));
  const double scale = -lr_ * m_scale / (std::sqrt(v_hat) + opt_.eps);
  const Tensor next = m.project(m.expmap(x, mom * scale, dim), dim);
  const Tensor moved = m.parallel_transport(x, next, mom, dim);
  s.momentum.assign(moved.data().begin(), moved.data().end());
  return next;
}

// ---------------------------------------------------------------------------

StepDecay::StepDecay(Optimizer& optimizer, double gamma, std::int64_t every)
    : optimizer_(optimizer), gamma_(gamma), every_(every) {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("decay factor must lie in (0, 1]");
  if (every < 1) throw ConfigError("decay interval must be at least 1 epoch");
}

void StepDecay::epoch_end() {
  ++epochs_;
  if (epochs_ % every_ == 0) optimizer_.set_lr(optimizer_.lr() * gamma_);
}

}  // namespace hyp::optim
