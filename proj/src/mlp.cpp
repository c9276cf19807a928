#include "tinyids/mlp.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "tinyids/error.hpp"
#include "tinyids/log.hpp"
#include "tinyids/rng.hpp"

namespace tinyids::mlp {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

double to_float32(double v) { return static_cast<double>(static_cast<float>(v)); }

void round_parameters(MlpModel& model) {
  for (auto& layer : model.layers) {
    for (auto& w : layer.weights) w = to_float32(w);
    for (auto& b : layer.bias) b = to_float32(b);
  }
}

}  // namespace

ArchSpec ArchSpec::parse(std::string_view text) {
  if (text == "baseline") return baseline();
  if (text == "enhanced") return enhanced();
  if (text == "compact") return compact();
  ArchSpec spec;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto token = text.substr(0, comma);
    std::size_t width = 0;
    auto res = std::from_chars(token.data(), token.data() + token.size(), width);
    if (res.ec != std::errc{} || res.ptr != token.data() + token.size() || width == 0) {
      throw ArgumentError("invalid architecture '" + std::string(text) +
                          "' (expected baseline|enhanced|compact or widths like 16,32,32)");
    }
    spec.hidden.push_back(width);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
  }
  if (spec.hidden.empty()) throw ArgumentError("architecture needs at least one hidden layer");
  return spec;
}

void MlpModel::validate() const {
  if (layers.empty()) throw ArgumentError("model has no layers");
  if (layers.front().in_dim != n_features) throw ArgumentError("first layer input does not match n_features");
  if (layers.back().out_dim != n_classes) throw ArgumentError("last layer output does not match n_classes");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.in_dim == 0 || l.out_dim == 0) throw ArgumentError("layer " + std::to_string(i) + " has zero width");
    if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim) {
      throw ArgumentError("layer " + std::to_string(i) + " parameter sizes do not match its dims");
    }
    if (i + 1 < layers.size() && layers[i + 1].in_dim != l.out_dim) {
      throw ArgumentError("layer " + std::to_string(i + 1) + " input does not chain");
    }
    if (l.activation == Activation::softmax && i + 1 != layers.size()) {
      throw ArgumentError("softmax is only allowed on the last layer");
    }
  }
  if (!scaler.empty() && scaler.size() != n_features) throw ArgumentError("scaler width does not match n_features");
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ArgumentError("patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    wait_ = 0;
    return false;
  }
  ++wait_;
  return wait_ >= patience_;
}

MlpModel build_mlp(const ArchSpec& arch, std::size_t n_features, std::size_t n_classes, std::uint64_t seed) {
  if (n_features < 1) throw ArgumentError("n_features must be >= 1");
  if (n_classes < 2) throw ArgumentError("n_classes must be >= 2");
  if (arch.hidden.empty()) throw ArgumentError("architecture needs at least one hidden layer");
  for (auto w : arch.hidden) {
    if (w < 1) throw ArgumentError("hidden widths must be >= 1");
  }
  MlpModel model;
  model.n_features = n_features;
  model.n_classes = n_classes;
  Rng rng(seed);
  std::size_t in = n_features;
  auto add_layer = [&](std::size_t out, Activation act) {
    DenseLayer l;
    l.in_dim = in;
    l.out_dim = out;
    l.activation = act;
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    l.weights.resize(in * out);
    for (auto& w : l.weights) w = to_float32(rng.uniform(-limit, limit));
    l.bias.assign(out, 0.0);
    model.layers.push_back(std::move(l));
    in = out;
  };
  for (auto width : arch.hidden) add_layer(width, Activation::relu);
  add_layer(n_classes, Activation::softmax);
  return model;
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) return;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (auto& v : logits) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : logits) v /= sum;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

std::vector<double> logits(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) {
    throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                    std::to_string(model.n_features));
  }
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  for (const auto& l : model.layers) {
    next.assign(l.out_dim, 0.0);
    for (std::size_t o = 0; o < l.out_dim; ++o) {
      const double* w = l.weights.data() + o * l.in_dim;
      double acc = l.bias[o];
      for (std::size_t i = 0; i < l.in_dim; ++i) acc += w[i] * cur[i];
      next[o] = (l.activation == Activation::relu && acc < 0.0) ? 0.0 : acc;
    }
    cur.swap(next);
  }
  return cur;
}

std::vector<double> forward(const MlpModel& model, std::span<const double> x) {
  auto out = logits(model, x);
  if (model.layers.back().activation == Activation::softmax) softmax_inplace(out);
  return out;
}

std::size_t predict(const MlpModel& model, std::span<const double> x) { return argmax(forward(model, x)); }

std::vector<double> forward_raw(const MlpModel& model, std::span<const double> raw) {
  if (model.scaler.empty()) return forward(model, raw);
  std::vector<double> x(raw.begin(), raw.end());
  model.scaler.transform_row(x);
  return forward(model, x);
}

// ---------------------------------------------------------------------------
// Batched loss and backpropagation

namespace {

struct Workspace {
  std::vector<RowMatrix> activations;  // activations[0] = input batch
  std::vector<RowMatrix> pre;          // pre-activation per layer
};

double batch_loss_and_gradient(const MlpModel& model, const LabeledData& data, std::span<const std::size_t> idx,
                               Gradients* grad, Workspace& ws) {
  const std::size_t n_layers = model.layers.size();
  const auto batch = static_cast<Eigen::Index>(idx.size());
  ws.activations.resize(n_layers + 1);
  ws.pre.resize(n_layers);

  auto& input = ws.activations[0];
  input.resize(batch, static_cast<Eigen::Index>(data.n_features));
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto r = data.row(idx[static_cast<std::size_t>(b)]);
    std::copy(r.begin(), r.end(), input.row(b).data());
  }

  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = model.layers[l];
    ConstMatrixMap w(layer.weights.data(), static_cast<Eigen::Index>(layer.out_dim),
                     static_cast<Eigen::Index>(layer.in_dim));
    ConstVectorMap bias(layer.bias.data(), static_cast<Eigen::Index>(layer.out_dim));
    auto& z = ws.pre[l];
    z.noalias() = ws.activations[l] * w.transpose();
    z.rowwise() += bias;
    auto& a = ws.activations[l + 1];
    if (layer.activation == Activation::relu) {
      a = z.cwiseMax(0.0);
    } else {
      a = z;
    }
  }

  // Cross-entropy on the last pre-activation via log-sum-exp; the softmax
  // output doubles as the start of backprop.
  const auto& z_out = ws.pre.back();
  RowMatrix delta(batch, z_out.cols());
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    const double mx = z_out.row(b).maxCoeff();
    const auto shifted = (z_out.row(b).array() - mx).eval();
    const double sum = shifted.exp().sum();
    const double lse = std::log(sum);
    const auto y = static_cast<Eigen::Index>(data.labels[idx[static_cast<std::size_t>(b)]]);
    loss += lse - shifted(y);
    delta.row(b) = (shifted - lse).exp().matrix();
    delta(b, y) -= 1.0;
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  loss *= inv_batch;
  if (!grad) return loss;

  delta *= inv_batch;
  grad->weights.resize(n_layers);
  grad->bias.resize(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& layer = model.layers[l];
    auto& gw = grad->weights[l];
    auto& gb = grad->bias[l];
    gw.resize(layer.weights.size());
    gb.resize(layer.out_dim);
    MatrixMap gw_map(gw.data(), static_cast<Eigen::Index>(layer.out_dim), static_cast<Eigen::Index>(layer.in_dim));
    gw_map.noalias() = delta.transpose() * ws.activations[l];
    Eigen::Map<Eigen::RowVectorXd>(gb.data(), static_cast<Eigen::Index>(layer.out_dim)) = delta.colwise().sum();
    if (l == 0) break;
    ConstMatrixMap w(layer.weights.data(), static_cast<Eigen::Index>(layer.out_dim),
                     static_cast<Eigen::Index>(layer.in_dim));
    RowMatrix prev = delta * w;
    if (model.layers[l - 1].activation == Activation::relu) {
      prev = (ws.pre[l - 1].array() > 0.0).select(prev, 0.0);
    }
    delta = std::move(prev);
  }
  return loss;
}

void check_labels(const MlpModel& model, const LabeledData& data) {
  if (data.n_features != model.n_features) {
    throw DataError("data has " + std::to_string(data.n_features) + " features, model expects " +
                    std::to_string(model.n_features));
  }
  for (auto y : data.labels) {
    if (y >= model.n_classes) throw DataError("label " + std::to_string(y) + " out of range");
  }
}

}  // namespace

double loss_and_gradient(const MlpModel& model, const LabeledData& batch, Gradients* grad) {
  check_labels(model, batch);
  if (batch.empty()) throw DataError("empty batch");
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Workspace ws;
  return batch_loss_and_gradient(model, batch, idx, grad, ws);
}

double mean_loss(const MlpModel& model, const LabeledData& data) {
  check_labels(model, data);
  if (data.empty()) throw DataError("empty data set");
  constexpr std::size_t kChunk = 1024;
  Workspace ws;
  std::vector<std::size_t> idx;
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(data.size(), start + kChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    total += batch_loss_and_gradient(model, data, idx, nullptr, ws) * static_cast<double>(idx.size());
  }
  return total / static_cast<double>(data.size());
}

std::pair<MlpModel, TrainHistory> train(MlpModel model, const LabeledData& train_set, const TrainConfig& config) {
  model.validate();
  check_labels(model, train_set);
  if (train_set.empty()) throw DataError("empty training set");
  if (!(config.validation_fraction > 0.0 && config.validation_fraction < 1.0)) {
    throw ArgumentError("validation fraction must be in (0, 1)");
  }
  if (config.batch_size == 0 || config.max_epochs == 0) throw ArgumentError("batch size and epochs must be >= 1");

  auto carve = dataset::stratified_split_indices(train_set.labels, config.validation_fraction, config.seed);
  LabeledData fit_part = train_set.subset(carve.train);
  LabeledData val_part = train_set.subset(carve.test);
  if (val_part.empty()) {
    log::warn("validation carve-out is empty; monitoring training loss instead");
  }

  struct AdamState {
    std::vector<double> m, v;
  };
  std::vector<AdamState> w_state(model.layers.size()), b_state(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    w_state[l] = {std::vector<double>(model.layers[l].weights.size()), std::vector<double>(model.layers[l].weights.size())};
    b_state[l] = {std::vector<double>(model.layers[l].bias.size()), std::vector<double>(model.layers[l].bias.size())};
  }
  std::size_t step = 0;
  auto adam = [&](std::vector<double>& params, const std::vector<double>& g, AdamState& s, double lr_t) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      s.m[i] = config.beta1 * s.m[i] + (1.0 - config.beta1) * g[i];
      s.v[i] = config.beta2 * s.v[i] + (1.0 - config.beta2) * g[i] * g[i];
      params[i] -= lr_t * s.m[i] / (std::sqrt(s.v[i]) + config.epsilon);
    }
  };

  Rng rng(config.seed + 1);
  std::vector<std::size_t> order(fit_part.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Workspace ws;
  Gradients grad;
  EarlyStopping stopper(config.patience);
  TrainHistory history;
  std::vector<DenseLayer> best_layers = model.layers;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      epoch_loss += batch_loss_and_gradient(model, fit_part, idx, &grad, ws) * static_cast<double>(idx.size());
      ++step;
      const double t = static_cast<double>(step);
      const double lr_t = config.learning_rate * std::sqrt(1.0 - std::pow(config.beta2, t)) /
                          (1.0 - std::pow(config.beta1, t));
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        adam(model.layers[l].weights, grad.weights[l], w_state[l], lr_t);
        adam(model.layers[l].bias, grad.bias[l], b_state[l], lr_t);
      }
    }
    epoch_loss /= static_cast<double>(order.size());
    const double monitored = val_part.empty() ? epoch_loss : mean_loss(model, val_part);
    history.train_loss.push_back(epoch_loss);
    history.val_loss.push_back(monitored);
    history.epochs_run = epoch;
    const bool stop = stopper.update(epoch, monitored);
    if (stopper.last_improved()) best_layers = model.layers;
    if (stop) break;
  }
  history.best_epoch = stopper.best_epoch();
  model.layers = std::move(best_layers);
  round_parameters(model);
  return {std::move(model), std::move(history)};
}

std::size_t parameter_count(const MlpModel& model) {
  std::size_t n = 0;
  for (const auto& l : model.layers) n += l.weights.size() + l.bias.size();
  return n;
}

std::size_t weight_payload_bytes(const MlpModel& model) { return 4 * parameter_count(model); }

std::size_t working_set_bytes(const MlpModel& model) {
  std::size_t widest = 0;
  for (const auto& l : model.layers) widest = std::max(widest, l.in_dim + l.out_dim);
  return widest * sizeof(double) + model.n_classes * sizeof(double);
}

std::vector<std::uint8_t> serialize_mlp(const MlpModel& model) {
  model.validate();
  if (model.layers.size() > 0xFF) throw ArgumentError("too many layers for the model format");
  ByteWriter w;
  w.header(ArtifactKind::float_mlp);
  w.u8(static_cast<std::uint8_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    if (l.in_dim > 0xFFFF || l.out_dim > 0xFFFF) throw ArgumentError("layer too wide for the model format");
    w.u16(static_cast<std::uint16_t>(l.in_dim));
    w.u16(static_cast<std::uint16_t>(l.out_dim));
    w.u8(static_cast<std::uint8_t>(l.activation));
    for (double v : l.weights) w.f32(static_cast<float>(v));
    for (double v : l.bias) w.f32(static_cast<float>(v));
  }
  write_scaler(w, model.scaler);
  write_label_table(w, model.label_names);
  return std::move(w).take();
}

MlpModel deserialize_mlp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(ArtifactKind::float_mlp);
  MlpModel model;
  const std::size_t n_layers = r.u8();
  if (n_layers == 0) r.fail("model has no layers");
  for (std::size_t i = 0; i < n_layers; ++i) {
    DenseLayer l;
    l.in_dim = r.u16();
    l.out_dim = r.u16();
    const std::size_t act_offset = r.offset();
    const std::uint8_t act = r.u8();
    if (act > 2) throw FormatError("layer " + std::to_string(i) + ": invalid activation byte " + std::to_string(act), act_offset);
    l.activation = static_cast<Activation>(act);
    if (l.in_dim == 0 || l.out_dim == 0) r.fail("layer " + std::to_string(i) + ": zero dimension");
    if (!model.layers.empty() && model.layers.back().out_dim != l.in_dim) {
      r.fail("layer " + std::to_string(i) + ": input dimension does not chain");
    }
    l.weights.resize(l.in_dim * l.out_dim);
    for (auto& v : l.weights) v = r.f32();
    l.bias.resize(l.out_dim);
    for (auto& v : l.bias) v = r.f32();
    model.layers.push_back(std::move(l));
  }
  model.n_features = model.layers.front().in_dim;
  model.n_classes = model.layers.back().out_dim;
  model.scaler = read_scaler(r);
  model.label_names = read_label_table(r);
  r.expect_end();
  try {
    model.validate();
  } catch (const ArgumentError& e) {
    throw FormatError(e.what(), bytes.size());
  }
  return model;
}

}  // namespace tinyids::mlp
