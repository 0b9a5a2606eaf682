#include "hyptk/app/runs.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hyptk/app/export.hpp"
#include "hyptk/errors.hpp"

namespace hyp::app {

Run::Run(RunConfig config) : config_(std::move(config)) {
  validate(config_);
  curvature_ = std::make_shared<Curvature>(config_.curvature, config_.learnable_curvature);
  manifold_ = config_.manifold == "poincare" ? make_poincare_ball(curvature_) : make_euclidean();
  rng_.seed(config_.seed);
}

Run::~Run() = default;

double Run::curvature() const { return curvature_->c(); }

void Run::init_optimizer() {
  auto params = parameters();
  if (config_.learnable_curvature) params.push_back({"curvature", curvature_->raw(), nullptr, -1});
  if (config_.optimizer == "rsgd") {
    optimizer_ = std::make_unique<optim::RSGD>(std::move(params), config_.lr, config_.momentum);
  } else {
    optimizer_ = std::make_unique<optim::RAdam>(std::move(params), config_.lr);
  }
  schedule_ = std::make_unique<optim::StepDecay>(*optimizer_, config_.lr_decay,
                                                 config_.lr_decay_every);
}

MetricRow Run::train_epoch() {
  MetricRow row = run_epoch();
  ++epoch_;
  schedule_->epoch_end();
  row.epoch = epoch_;
  row.step = step_;
  if (!std::isfinite(row.loss)) {
    throw NumericError("non-finite loss in epoch " + std::to_string(epoch_));
  }
  history_.push_back(row);
  return row;
}

void Run::train(const std::function<void(const MetricRow&)>& on_epoch) {
  const auto notify = [&](const MetricRow& row) {
    if (on_epoch) on_epoch(row);
  };
  try {
    if (history_.empty()) {
      MetricRow row = evaluate();
      row.epoch = epoch_;
      row.step = step_;
      if (!std::isfinite(row.loss)) throw NumericError("non-finite loss at initialization");
      history_.push_back(row);
      notify(row);
    }
    while (epoch_ < config_.epochs) {
      const MetricRow row = train_epoch();
      if (config_.checkpoint_every > 0 && !config_.checkpoint_out.empty() &&
          epoch_ % config_.checkpoint_every == 0) {
        save(config_.checkpoint_out);
      }
      notify(row);
    }
  } catch (const NumericError&) {
    if (!config_.metrics_out.empty()) write_metrics(config_.metrics_out);
    throw;
  }
  if (!config_.checkpoint_out.empty()) save(config_.checkpoint_out);
  if (!config_.metrics_out.empty()) write_metrics(config_.metrics_out);
}

Checkpoint Run::checkpoint() const {
  Checkpoint ck;
  ck.curvature_raw = curvature_->raw().item();
  ck.curvature_learnable = curvature_->learnable();
  ck.params = capture(parameters());
  ck.config = to_settings(config_);
  ck.epoch = epoch_;
  ck.step = step_;
  std::ostringstream rng;
  rng << rng_;
  ck.rng_state = rng.str();
  ck.lr = optimizer_->lr();
  ck.slots = optimizer_->state();
  ck.history = history_;
  return ck;
}

void Run::save(const std::filesystem::path& path) const { save_checkpoint(path, checkpoint()); }

void Run::write_metrics(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write metrics file " + path.string());
  out << metrics_csv(history_);
  if (!out) throw DataError("failed writing metrics file " + path.string());
}

void Run::restore_from(const Checkpoint& ck) {
  curvature_->raw().mutable_data()[0] = ck.curvature_raw;
  restore(ck.params, parameters());
  const auto& params = optimizer_->params();
  if (ck.slots.size() != params.size()) throw DataError("checkpoint optimizer state size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = static_cast<std::size_t>(params[i].tensor.size());
    const auto& s = ck.slots[i];
    const std::size_t moments = params[i].manifold && params[i].manifold->kind() ==
                                                           ManifoldKind::kPoincareBall
                                    ? 1
                                    : n;
    if (s.momentum.size() != n || s.second_moment.size() != moments || s.steps < 0) {
      throw DataError("checkpoint optimizer state does not match parameter " + params[i].name);
    }
  }
  if (!(ck.lr > 0.0) || ck.epoch < 0 || ck.step < 0) {
    throw DataError("checkpoint run state out of range");
  }
  optimizer_->state() = ck.slots;
  optimizer_->set_lr(ck.lr);
  std::istringstream rng(ck.rng_state);
  rng >> rng_;
  if (!rng) throw DataError("checkpoint holds an unreadable random-generator state");
  epoch_ = ck.epoch;
  step_ = ck.step;
  schedule_->set_epochs(epoch_);
  history_ = ck.history;
}

// ---------------------------------------------------------------------------

EmbeddingRun::EmbeddingRun(RunConfig config)
    : Run(std::move(config)),
      tree_(generate_tree(config_.depth, config_.branching)),
      embedding_(tree_.size(), config_.dim, manifold_) {
  embedding_.init_parameters(rng_);
  const std::int64_t n = tree_.size();
  const auto dg = tree_.graph_distances();
  std::vector<double> target;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = i + 1; j < n; ++j) {
      left_.push_back(i);
      right_.push_back(j);
      target.push_back(config_.tau * static_cast<double>(dg[i * n + j]));
    }
  }
  const auto pairs = static_cast<std::int64_t>(target.size());
  target_ = Tensor({pairs}, std::move(target));
  init_optimizer();
}

Tensor EmbeddingRun::loss() const {
  const Tensor diff = distance(embedding_.lookup(left_), embedding_.lookup(right_)) - target_;
  return sum(diff * diff);
}

MetricRow EmbeddingRun::run_epoch() {
  optimizer_->zero_grad();
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  optimizer_->step();
  ++step_;
  return evaluate();
}

MetricRow EmbeddingRun::evaluate() {
  NoGradScope no_grad;
  return {epoch_, step_, loss().item(), std::nullopt};
}

double EmbeddingRun::distortion() const {
  NoGradScope no_grad;
  const Tensor d = distance(embedding_.lookup(left_), embedding_.lookup(right_));
  double total = 0.0;
  for (std::int64_t i = 0; i < d.size(); ++i) total += std::abs(d[i] / target_[i] - 1.0);
  return total / static_cast<double>(d.size());
}

std::vector<std::string> EmbeddingRun::labels() const {
  std::vector<std::string> out;
  for (std::int64_t i = 0; i < tree_.size(); ++i) out.push_back(tree_.label(i));
  return out;
}

void EmbeddingRun::export_disk(const std::filesystem::path& path, const std::string& format) const {
  if (manifold_->kind() != ManifoldKind::kPoincareBall) {
    throw ConfigError("disk export needs the poincare manifold");
  }
  const auto names = labels();
  app::export_disk(path, embedding_.table().tensor(), names, format, curvature());
}

std::vector<nn::ParamRef> EmbeddingRun::parameters() const { return embedding_.parameters(); }

// ---------------------------------------------------------------------------

ImageRun::ImageRun(RunConfig config, ImageDataset data)
    : Run(std::move(config)), data_(std::move(data)) {
  if (data_.height != data_.width) throw DataError("images must be square");
  if (data_.size() == 0) throw DataError("the training set is empty");
  for (std::int64_t y : data_.labels) {
    if (y < 0 || y >= config_.classes) {
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(config_.classes) + ")");
    }
  }
  nn::ConvNetConfig net;
  net.image_size = data_.height;
  net.classes = config_.classes;
  model_ = std::make_unique<nn::ConvNet>(net, manifold_);
  model_->init_parameters(rng_);
  init_optimizer();
}

namespace {

std::int64_t count_correct(const Tensor& logits, std::span<const std::int64_t> labels) {
  const std::int64_t k = logits.shape()[1];
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    correct += best == labels[i];
  }
  return correct;
}

}  // namespace

MetricRow ImageRun::run_epoch() {
  std::vector<std::int64_t> order(static_cast<std::size_t>(data_.size()));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  const std::span<const std::int64_t> all(order);
  for (std::size_t first = 0; first < order.size(); first += config_.batch_size) {
    const auto idx = all.subspan(first, std::min<std::size_t>(config_.batch_size, order.size() - first));
    const Tensor images = data_.images(idx);
    const auto labels = data_.labels_of(idx);
    optimizer_->zero_grad();
    Tensor logits, loss;
    {
      Tape tape;
      TapeScope scope(tape);
      logits = model_->forward(nn::lift_to_manifold(images, manifold_, 1));
      loss = nn::cross_entropy(logits, labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("non-finite loss at step " + std::to_string(step_ + 1));
      }
      tape.backward(loss);
    }
    optimizer_->step();
    ++step_;
    loss_sum += loss.item() * static_cast<double>(idx.size());
    correct += count_correct(logits, labels);
  }
  const auto n = static_cast<double>(data_.size());
  return {epoch_, step_, loss_sum / n, static_cast<double>(correct) / n};
}

MetricRow ImageRun::evaluate() {
  NoGradScope no_grad;
  model_->set_training(false);
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  std::vector<std::int64_t> idx;
  for (std::int64_t first = 0; first < data_.size(); first += config_.batch_size) {
    idx.clear();
    for (std::int64_t i = first; i < std::min(data_.size(), first + config_.batch_size); ++i) {
      idx.push_back(i);
    }
    const auto labels = data_.labels_of(idx);
    const Tensor logits = model_->forward(nn::lift_to_manifold(data_.images(idx), manifold_, 1));
    loss_sum += nn::cross_entropy(logits, labels).item() * static_cast<double>(idx.size());
    correct += count_correct(logits, labels);
  }
  model_->set_training(true);
  const auto n = static_cast<double>(data_.size());
  return {epoch_, step_, loss_sum / n, static_cast<double>(correct) / n};
}

std::vector<nn::ParamRef> ImageRun::parameters() const { return model_->parameters(); }

// ---------------------------------------------------------------------------

ImageDataset load_image_data(const RunConfig& config) {
  if (config.synthetic) return synthetic_bars(config.samples, config.image_size, config.seed);
  return load_idx(config.train_images, config.train_labels, config.classes,
                  {config.crop, config.downscale});
}

std::unique_ptr<Run> make_run(const RunConfig& config) {
  validate(config);
  if (config.command == "embed-tree") return std::make_unique<EmbeddingRun>(config);
  return std::make_unique<ImageRun>(config, load_image_data(config));
}

std::unique_ptr<Run> load_run(const std::filesystem::path& path, std::span<const Setting> overrides) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.config.empty()) throw DataError("checkpoint " + path.string() + " holds no run state");
  RunConfig config;
  try {
    for (const auto& [key, value] : ck.config) apply_setting(config, key, value);
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint config: ") + e.what());
  }
  static const std::vector<std::string> allowed{"epochs",      "metrics-out", "checkpoint-out",
                                                "checkpoint-every", "export-disk", "export-format"};
  for (const auto& [key, value] : overrides) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("'" + key + "' cannot be changed when resuming from a checkpoint");
    }
    apply_setting(config, key, value);
  }
  auto run = make_run(config);
  run->restore_from(ck);
  return run;
}

std::string metrics_csv(std::span<const MetricRow> rows) {
  std::string out = "epoch,step,loss,accuracy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + std::to_string(r.step) + ',' + format_number(r.loss) + ',';
    if (r.accuracy) out += format_number(*r.accuracy);
    out += '\n';
  }
  return out;
}

}  // namespace hyp::app
