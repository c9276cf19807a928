#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "tinyids/forest.hpp"
#include "tinyids/mlp.hpp"
#include "tinyids/quant.hpp"

namespace tinyids {

using AnyModel = std::variant<mlp::MlpModel, quant::QuantizedMlpModel, forest::Forest>;

struct Inference {
  std::uint8_t predicted_class = 0;
  double confidence = 0.0;  // top softmax probability, or vote share for forests
};

// Runs one raw (unscaled) sample through the model's bundled scaler and the model.
Inference infer(const AnyModel& model, std::span<const double> raw);

std::size_t input_features(const AnyModel& model);
std::size_t class_count(const AnyModel& model);
std::size_t working_set_bytes(const AnyModel& model);
ArtifactKind model_kind(const AnyModel& model);
std::string_view kind_name(ArtifactKind kind);

std::vector<std::uint8_t> serialize_model(const AnyModel& model);
AnyModel deserialize_model(std::span<const std::uint8_t> bytes);
AnyModel load_model(const std::filesystem::path& path);
void save_model(const AnyModel& model, const std::filesystem::path& path);

}  // namespace tinyids
