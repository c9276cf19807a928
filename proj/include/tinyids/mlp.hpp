#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tinyids/dataset.hpp"

namespace tinyids::mlp {

enum class Activation : std::uint8_t { none = 0, relu = 1, softmax = 2 };

struct ArchSpec {
  std::vector<std::size_t> hidden;

  static ArchSpec baseline() { return {{16, 32, 32}}; }
  static ArchSpec enhanced() { return {std::vector<std::size_t>(12, 64)}; }
  static ArchSpec compact() { return {{8, 8, 8}}; }
  // "baseline", "enhanced", "compact" or a comma list of widths such as "16,32,32".
  static ArchSpec parse(std::string_view text);
};

struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> weights;  // out_dim x in_dim, row-major
  std::vector<double> bias;
  Activation activation = Activation::relu;
};

/// Float dense network. Parameters are held in double precision for training
/// and rounded to float32 once training finishes, which is what the model file
/// stores.
struct MlpModel {
  std::vector<DenseLayer> layers;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  ScalerParams scaler;  // empty means inputs are already scaled
  std::vector<std::string> label_names;

  // Throws ArgumentError when dimensions do not chain.
  void validate() const;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double validation_fraction = 0.10;
  std::uint64_t seed = 0;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;  // 1-based
};

/// Patience-based stop rule on a monitored loss; improvement means a strict decrease.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Feeds the loss of a finished epoch (1-based). Returns true once `patience`
  // consecutive epochs failed to improve.
  bool update(std::size_t epoch, double loss);
  bool last_improved() const { return wait_ == 0; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t wait_ = 0;
  std::size_t best_epoch_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

MlpModel build_mlp(const ArchSpec& arch, std::size_t n_features, std::size_t n_classes, std::uint64_t seed);

void softmax_inplace(std::span<double> logits);
// Index of the largest entry; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

// Pre-softmax outputs for an already-scaled input.
std::vector<double> logits(const MlpModel& model, std::span<const double> x);
std::vector<double> forward(const MlpModel& model, std::span<const double> x);
std::size_t predict(const MlpModel& model, std::span<const double> x);
// Applies the bundled scaler before the forward pass.
std::vector<double> forward_raw(const MlpModel& model, std::span<const double> raw);

struct Gradients {
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> bias;
};

// Mean sparse categorical cross-entropy over `batch`; fills `grad` when non-null.
double loss_and_gradient(const MlpModel& model, const LabeledData& batch, Gradients* grad);
double mean_loss(const MlpModel& model, const LabeledData& data);

std::pair<MlpModel, TrainHistory> train(MlpModel model, const LabeledData& train_set, const TrainConfig& config);

std::size_t parameter_count(const MlpModel& model);
// Bytes of weights + biases at float32 width.
std::size_t weight_payload_bytes(const MlpModel& model);
// Largest pair of adjacent double activation buffers plus the output buffer.
std::size_t working_set_bytes(const MlpModel& model);

std::vector<std::uint8_t> serialize_mlp(const MlpModel& model);
MlpModel deserialize_mlp(std::span<const std::uint8_t> bytes);

}  // namespace tinyids::mlp
