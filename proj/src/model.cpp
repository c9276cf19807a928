#include "tinyids/model.hpp"

#include <algorithm>

#include "tinyids/error.hpp"

namespace tinyids {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Inference from_probabilities(const std::vector<double>& p) {
  const std::size_t c = mlp::argmax(p);
  return {static_cast<std::uint8_t>(c), p[c]};
}

}  // namespace

Inference infer(const AnyModel& model, std::span<const double> raw) {
  return std::visit(overloaded{
                        [&](const mlp::MlpModel& m) { return from_probabilities(mlp::forward_raw(m, raw)); },
                        [&](const quant::QuantizedMlpModel& m) {
                          return from_probabilities(quant::quantized_forward(m, raw));
                        },
                        [&](const forest::Forest& f) {
                          const auto v = forest::votes_raw(f, raw);
                          const auto best = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
                          return Inference{static_cast<std::uint8_t>(best),
                                           static_cast<double>(v[best]) / static_cast<double>(f.trees.size())};
                        },
                    },
                    model);
}

std::size_t input_features(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.n_features; }, model);
}

std::size_t class_count(const AnyModel& model) {
  return std::visit([](const auto& m) { return m.n_classes; }, model);
}

std::size_t working_set_bytes(const AnyModel& model) {
  return std::visit(overloaded{
                        [](const mlp::MlpModel& m) { return mlp::working_set_bytes(m); },
                        [](const quant::QuantizedMlpModel& m) { return quant::working_set_bytes(m); },
                        [](const forest::Forest& f) { return forest::working_set_bytes(f); },
                    },
                    model);
}

ArtifactKind model_kind(const AnyModel& model) {
  switch (model.index()) {
    case 0: return ArtifactKind::float_mlp;
    case 1: return ArtifactKind::quant_mlp;
    default: return ArtifactKind::forest;
  }
}

std::string_view kind_name(ArtifactKind kind) {
  switch (kind) {
    case ArtifactKind::dataset: return "dataset";
    case ArtifactKind::float_mlp: return "float-mlp";
    case ArtifactKind::quant_mlp: return "quant-mlp";
    case ArtifactKind::forest: return "forest";
  }
  return "unknown";
}

std::vector<std::uint8_t> serialize_model(const AnyModel& model) {
  return std::visit(overloaded{
                        [](const mlp::MlpModel& m) { return mlp::serialize_mlp(m); },
                        [](const quant::QuantizedMlpModel& m) { return quant::serialize_qmlp(m); },
                        [](const forest::Forest& f) { return forest::serialize_forest(f); },
                    },
                    model);
}

AnyModel deserialize_model(std::span<const std::uint8_t> bytes) {
  switch (peek_artifact_kind(bytes)) {
    case ArtifactKind::float_mlp: return mlp::deserialize_mlp(bytes);
    case ArtifactKind::quant_mlp: return quant::deserialize_qmlp(bytes);
    case ArtifactKind::forest: return forest::deserialize_forest(bytes);
    case ArtifactKind::dataset: break;
  }
  throw FormatError("file holds a dataset, not a model", 5);
}

AnyModel load_model(const std::filesystem::path& path) {
  return deserialize_model(read_file_bytes(path));
}

void save_model(const AnyModel& model, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_model(model));
}

}  // namespace tinyids
