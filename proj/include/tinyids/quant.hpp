#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tinyids/dataset.hpp"
#include "tinyids/mlp.hpp"

namespace tinyids::quant {

/// Symmetric per-row int8 weights. Zero point is always 0.
struct QuantTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int8_t> q;  // rows x cols, row-major, each in [-127, 127]
  std::vector<float> scale;    // one per row, > 0

  friend bool operator==(const QuantTensor&, const QuantTensor&) = default;
};

struct QuantLayer {
  QuantTensor weights;
  std::vector<float> bias;
  mlp::Activation activation = mlp::Activation::relu;  // relu or none
  std::vector<std::int32_t> row_sums;                  // Σ_i q[o, i], derived at load
};

/// Dynamic-range quantized network: int8 weights, float activations between
/// layers, inputs quantized per call. The last dense layer is linear and is
/// followed by a separate softmax stage (beta 1). Batch size is fixed at 1.
struct QuantizedMlpModel {
  std::vector<QuantLayer> layers;
  std::size_t n_features = 0;
  std::size_t n_classes = 0;
  bool asymmetric_inputs = true;
  ScalerParams scaler;
  std::vector<std::string> label_names;
};

struct InputQuantization {
  double scale = 1.0;
  int zero_point = 0;
};

// Round half away from zero.
inline double round_half_away(double v) { return std::round(v); }

QuantTensor quantize_weights(std::span<const double> w, std::size_t rows, std::size_t cols);
std::vector<double> dequantize(const QuantTensor& t);

/// Asymmetric quantization of one activation vector into [-128, 127]. The
/// range is widened to include 0 when it does not already, which keeps the
/// (q - zp) * scale roundtrip within scale / 2 for every element.
InputQuantization quantize_input_dynamic(std::span<const float> x, std::span<std::int8_t> q);
InputQuantization quantize_input_dynamic(std::span<const double> x, std::vector<std::int8_t>& q);

QuantizedMlpModel convert(const mlp::MlpModel& model);
// Float model whose weights are the dequantized int8 tensors; used to check
// that conversion is a fixed point.
mlp::MlpModel dequantize_model(const QuantizedMlpModel& qmodel);

// Logits for an already-scaled input.
std::vector<double> quantized_logits(const QuantizedMlpModel& qmodel, std::span<const double> x);
// Probabilities for a raw input; the bundled scaler is applied first.
std::vector<double> quantized_forward(const QuantizedMlpModel& qmodel, std::span<const double> raw);
std::size_t quantized_predict(const QuantizedMlpModel& qmodel, std::span<const double> raw);

// Bytes of int8 weights only (scales and biases excluded).
std::size_t weight_payload_bytes(const QuantizedMlpModel& qmodel);
// max over layers of (float input + int8 input + int32 accumulators) plus the output buffer.
std::size_t working_set_bytes(const QuantizedMlpModel& qmodel);

std::vector<std::uint8_t> serialize_qmlp(const QuantizedMlpModel& qmodel);
QuantizedMlpModel deserialize_qmlp(std::span<const std::uint8_t> bytes);

}  // namespace tinyids::quant
