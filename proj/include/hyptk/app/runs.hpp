#pragma once

// Training workflows behind the command-line tool: hierarchy embedding into
// the Poincare disk and small-image classification.

#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hyptk/app/checkpoint.hpp"
#include "hyptk/app/config.hpp"
#include "hyptk/app/datasets.hpp"
#include "hyptk/app/tree.hpp"
#include "hyptk/nn.hpp"
#include "hyptk/optim.hpp"

namespace hyp::app {

class Run {
 public:
  virtual ~Run();
  Run(const Run&) = delete;
  Run& operator=(const Run&) = delete;

  const RunConfig& config() const { return config_; }
  const ManifoldPtr& manifold() const { return manifold_; }
  double curvature() const;
  std::int64_t epoch() const { return epoch_; }
  std::int64_t step() const { return step_; }
  const std::vector<MetricRow>& history() const { return history_; }
  optim::Optimizer& optimizer() { return *optimizer_; }

  // Loss (and accuracy where defined) of the current parameters over the
  // whole training set, without updating anything.
  virtual MetricRow evaluate() = 0;
  // Throws NumericError on a non-finite loss.
  MetricRow train_epoch();
  // Trains until config().epochs, records the initial evaluation as epoch 0,
  // writes metrics and checkpoints as configured.
  void train(const std::function<void(const MetricRow&)>& on_epoch = {});

  Checkpoint checkpoint() const;
  void save(const std::filesystem::path& path) const;
  void write_metrics(const std::filesystem::path& path) const;

  virtual std::vector<nn::ParamRef> parameters() const = 0;

 protected:
  explicit Run(RunConfig config);
  // Call once the model exists; builds the optimizer over parameters().
  void init_optimizer();
  virtual MetricRow run_epoch() = 0;
  void restore_from(const Checkpoint& checkpoint);

  RunConfig config_;
  std::shared_ptr<Curvature> curvature_;
  ManifoldPtr manifold_;
  std::mt19937_64 rng_;
  std::unique_ptr<optim::Optimizer> optimizer_;
  std::unique_ptr<optim::StepDecay> schedule_;
  std::int64_t epoch_ = 0;
  std::int64_t step_ = 0;
  std::vector<MetricRow> history_;

  friend std::unique_ptr<Run> load_run(const std::filesystem::path&, std::span<const Setting>);
};

class EmbeddingRun final : public Run {
 public:
  explicit EmbeddingRun(RunConfig config);

  const Tree& tree() const { return tree_; }
  const nn::HEmbedding& embedding() const { return embedding_; }
  MetricRow evaluate() override;
  // mean over node pairs of |d_emb / (tau * d_graph) - 1|
  double distortion() const;
  std::vector<std::string> labels() const;
  void export_disk(const std::filesystem::path& path, const std::string& format) const;
  std::vector<nn::ParamRef> parameters() const override;

 private:
  MetricRow run_epoch() override;
  Tensor loss() const;

  Tree tree_;
  nn::HEmbedding embedding_;
  std::vector<std::int64_t> left_, right_;
  Tensor target_;  // tau * graph distance per pair
};

class ImageRun final : public Run {
 public:
  ImageRun(RunConfig config, ImageDataset data);

  const ImageDataset& data() const { return data_; }
  nn::ConvNet& model() { return *model_; }
  MetricRow evaluate() override;
  std::vector<nn::ParamRef> parameters() const override;

 private:
  MetricRow run_epoch() override;

  ImageDataset data_;
  std::unique_ptr<nn::ConvNet> model_;
};

// Loads the training data named by the config (synthetic or IDX).
ImageDataset load_image_data(const RunConfig& config);

// Validates the config and builds a fresh run for its command.
std::unique_ptr<Run> make_run(const RunConfig& config);

// Rebuilds a run from a checkpoint. Overrides may only touch epochs,
// metrics-out, checkpoint-out, checkpoint-every, export-disk and
// export-format (ConfigError otherwise).
std::unique_ptr<Run> load_run(const std::filesystem::path& checkpoint,
                              std::span<const Setting> overrides = {});

std::string metrics_csv(std::span<const MetricRow> rows);

}  // namespace hyp::app
