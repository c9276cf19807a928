#include "tinyids/quant.hpp"

#include <algorithm>
#include <limits>

#include "tinyids/error.hpp"

namespace tinyids::quant {

namespace {

std::int32_t clamp_round(double v, int lo, int hi) {
  const double r = round_half_away(v);
  return static_cast<std::int32_t>(std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

std::vector<std::int32_t> row_sums(const QuantTensor& t) {
  std::vector<std::int32_t> sums(t.rows, 0);
  for (std::size_t o = 0; o < t.rows; ++o) {
    for (std::size_t i = 0; i < t.cols; ++i) sums[o] += t.q[o * t.cols + i];
  }
  return sums;
}

template <typename T>
InputQuantization quantize_into(std::span<const T> x, std::span<std::int8_t> q) {
  InputQuantization iq;
  if (x.empty()) return iq;
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  double lo = static_cast<double>(*lo_it);
  double hi = static_cast<double>(*hi_it);
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw DataError("cannot quantize a non-finite activation");
  bool done = false;
  if (lo == hi) {
    const double zp = round_half_away(-lo);
    if (zp >= -128.0 && zp <= 127.0) {
      iq.scale = 1.0;
      iq.zero_point = static_cast<int>(zp);
      done = true;
    }
  }
  if (!done) {
    lo = std::min(lo, 0.0);
    hi = std::max(hi, 0.0);
    iq.scale = (hi - lo) / 255.0;
    iq.zero_point = clamp_round(-128.0 - lo / iq.scale, -128, 127);
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    q[i] = static_cast<std::int8_t>(clamp_round(static_cast<double>(x[i]) / iq.scale + iq.zero_point, -128, 127));
  }
  return iq;
}

void check_activation(mlp::Activation a, std::size_t layer) {
  if (a != mlp::Activation::relu && a != mlp::Activation::none) {
    throw ArgumentError("layer " + std::to_string(layer) + ": quantized layers must be relu or linear");
  }
}

}  // namespace

QuantTensor quantize_weights(std::span<const double> w, std::size_t rows, std::size_t cols) {
  if (w.size() != rows * cols) throw ArgumentError("weight tensor size does not match its shape");
  QuantTensor t;
  t.rows = rows;
  t.cols = cols;
  t.q.resize(w.size());
  t.scale.resize(rows);
  for (std::size_t o = 0; o < rows; ++o) {
    const auto row = w.subspan(o * cols, cols);
    double max_abs = 0.0;
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("cannot quantize non-finite weight in row " + std::to_string(o));
      max_abs = std::max(max_abs, std::abs(v));
    }
    const float scale = max_abs > 0.0 ? static_cast<float>(max_abs / 127.0) : 1.0f;
    t.scale[o] = scale;
    for (std::size_t i = 0; i < cols; ++i) {
      t.q[o * cols + i] = static_cast<std::int8_t>(clamp_round(row[i] / static_cast<double>(scale), -127, 127));
    }
  }
  return t;
}

std::vector<double> dequantize(const QuantTensor& t) {
  std::vector<double> w(t.q.size());
  for (std::size_t o = 0; o < t.rows; ++o) {
    for (std::size_t i = 0; i < t.cols; ++i) {
      w[o * t.cols + i] = static_cast<double>(t.q[o * t.cols + i]) * static_cast<double>(t.scale[o]);
    }
  }
  return w;
}

InputQuantization quantize_input_dynamic(std::span<const float> x, std::span<std::int8_t> q) {
  if (q.size() < x.size()) throw ArgumentError("output buffer too small");
  return quantize_into(x, q);
}

InputQuantization quantize_input_dynamic(std::span<const double> x, std::vector<std::int8_t>& q) {
  q.resize(x.size());
  return quantize_into(x, std::span<std::int8_t>(q));
}

QuantizedMlpModel convert(const mlp::MlpModel& model) {
  model.validate();
  if (model.layers.back().activation != mlp::Activation::softmax) {
    throw ArgumentError("conversion needs a model whose last layer is softmax");
  }
  QuantizedMlpModel out;
  out.n_features = model.n_features;
  out.n_classes = model.n_classes;
  out.scaler = model.scaler;
  out.label_names = model.label_names;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& src = model.layers[l];
    QuantLayer ql;
    ql.weights = quantize_weights(src.weights, src.out_dim, src.in_dim);
    ql.bias.assign(src.bias.begin(), src.bias.end());
    // The fused softmax is split off into the terminal stage.
    ql.activation = src.activation == mlp::Activation::softmax ? mlp::Activation::none : src.activation;
    check_activation(ql.activation, l);
    ql.row_sums = row_sums(ql.weights);
    out.layers.push_back(std::move(ql));
  }
  return out;
}

mlp::MlpModel dequantize_model(const QuantizedMlpModel& qmodel) {
  mlp::MlpModel m;
  m.n_features = qmodel.n_features;
  m.n_classes = qmodel.n_classes;
  m.scaler = qmodel.scaler;
  m.label_names = qmodel.label_names;
  for (std::size_t l = 0; l < qmodel.layers.size(); ++l) {
    const auto& ql = qmodel.layers[l];
    mlp::DenseLayer d;
    d.in_dim = ql.weights.cols;
    d.out_dim = ql.weights.rows;
    d.weights = dequantize(ql.weights);
    d.bias.assign(ql.bias.begin(), ql.bias.end());
    d.activation = l + 1 == qmodel.layers.size() ? mlp::Activation::softmax : ql.activation;
    m.layers.push_back(std::move(d));
  }
  return m;
}

std::vector<double> quantized_logits(const QuantizedMlpModel& qmodel, std::span<const double> x) {
  if (x.size() != qmodel.n_features) {
    throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                    std::to_string(qmodel.n_features));
  }
  std::vector<float> act(x.begin(), x.end());
  std::vector<float> next;
  std::vector<std::int8_t> q;
  for (const auto& layer : qmodel.layers) {
    const auto& w = layer.weights;
    q.resize(w.cols);
    const InputQuantization iq = quantize_input_dynamic(std::span<const float>(act), std::span<std::int8_t>(q));
    next.assign(w.rows, 0.0f);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const std::int8_t* wr = w.q.data() + o * w.cols;
      std::int32_t acc = 0;
      for (std::size_t i = 0; i < w.cols; ++i) acc += static_cast<std::int32_t>(q[i]) * wr[i];
      acc -= iq.zero_point * layer.row_sums[o];
      float v = static_cast<float>(static_cast<double>(acc) * iq.scale * static_cast<double>(w.scale[o])) +
                layer.bias[o];
      if (layer.activation == mlp::Activation::relu && v < 0.0f) v = 0.0f;
      next[o] = v;
    }
    act.swap(next);
  }
  return {act.begin(), act.end()};
}

std::vector<double> quantized_forward(const QuantizedMlpModel& qmodel, std::span<const double> raw) {
  std::vector<double> x(raw.begin(), raw.end());
  if (!qmodel.scaler.empty()) {
    if (x.size() != qmodel.scaler.size()) {
      throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                      std::to_string(qmodel.n_features));
    }
    qmodel.scaler.transform_row(x);
  }
  auto out = quantized_logits(qmodel, x);
  mlp::softmax_inplace(out);
  return out;
}

std::size_t quantized_predict(const QuantizedMlpModel& qmodel, std::span<const double> raw) {
  return mlp::argmax(quantized_forward(qmodel, raw));
}

std::size_t weight_payload_bytes(const QuantizedMlpModel& qmodel) {
  std::size_t n = 0;
  for (const auto& l : qmodel.layers) n += l.weights.q.size();
  return n;
}

std::size_t working_set_bytes(const QuantizedMlpModel& qmodel) {
  std::size_t widest = 0;
  for (const auto& l : qmodel.layers) widest = std::max(widest, 5 * l.weights.cols + 4 * l.weights.rows);
  return widest + qmodel.n_classes * sizeof(double);
}

std::vector<std::uint8_t> serialize_qmlp(const QuantizedMlpModel& qmodel) {
  if (qmodel.layers.empty() || qmodel.layers.size() > 0xFF) throw ArgumentError("bad layer count for the model format");
  ByteWriter w;
  w.header(ArtifactKind::quant_mlp);
  w.u8(static_cast<std::uint8_t>(qmodel.layers.size()));
  for (const auto& l : qmodel.layers) {
    if (l.weights.cols > 0xFFFF || l.weights.rows > 0xFFFF) throw ArgumentError("layer too wide for the model format");
    w.u16(static_cast<std::uint16_t>(l.weights.cols));
    w.u16(static_cast<std::uint16_t>(l.weights.rows));
    w.u8(static_cast<std::uint8_t>(l.activation));
    for (auto v : l.weights.q) w.i8(v);
    for (auto s : l.weights.scale) w.f32(s);
    for (auto b : l.bias) w.f32(b);
  }
  w.u8(1);  // terminal softmax stage, beta 1
  write_scaler(w, qmodel.scaler);
  write_label_table(w, qmodel.label_names);
  return std::move(w).take();
}

QuantizedMlpModel deserialize_qmlp(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.header(ArtifactKind::quant_mlp);
  QuantizedMlpModel m;
  const std::size_t n_layers = r.u8();
  if (n_layers == 0) r.fail("model has no layers");
  for (std::size_t l = 0; l < n_layers; ++l) {
    QuantLayer ql;
    ql.weights.cols = r.u16();
    ql.weights.rows = r.u16();
    const std::size_t act_offset = r.offset();
    const std::uint8_t act = r.u8();
    if (act > 1) {
      throw FormatError("layer " + std::to_string(l) + ": invalid activation byte " + std::to_string(act), act_offset);
    }
    ql.activation = static_cast<mlp::Activation>(act);
    if (ql.weights.cols == 0 || ql.weights.rows == 0) r.fail("layer " + std::to_string(l) + ": zero dimension");
    if (!m.layers.empty() && m.layers.back().weights.rows != ql.weights.cols) {
      r.fail("layer " + std::to_string(l) + ": input dimension does not chain");
    }
    ql.weights.q.resize(ql.weights.rows * ql.weights.cols);
    for (auto& v : ql.weights.q) {
      v = r.i8();
      if (v == -128) r.fail("layer " + std::to_string(l) + ": weight -128 outside the symmetric range");
    }
    ql.weights.scale.resize(ql.weights.rows);
    for (auto& s : ql.weights.scale) {
      s = r.f32();
      if (!(s > 0.0f) || !std::isfinite(s)) r.fail("layer " + std::to_string(l) + ": scale must be positive");
    }
    ql.bias.resize(ql.weights.rows);
    for (auto& b : ql.bias) b = r.f32();
    ql.row_sums = row_sums(ql.weights);
    m.layers.push_back(std::move(ql));
  }
  if (m.layers.back().activation != mlp::Activation::none) r.fail("last dense layer must be linear");
  if (r.u8() != 1) r.fail("missing terminal softmax marker");
  m.n_features = m.layers.front().weights.cols;
  m.n_classes = m.layers.back().weights.rows;
  m.scaler = read_scaler(r);
  if (!m.scaler.empty() && m.scaler.size() != m.n_features) r.fail("scaler width does not match model input");
  m.label_names = read_label_table(r);
  r.expect_end();
  return m;
}

}  // namespace tinyids::quant
