#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "tinyids/mlp.hpp"
#include "tinyids/rng.hpp"

using namespace tinyids;
using namespace tinyids::mlp;

namespace {

// Loss recomputed from the raw parameters, independent of mlp.cpp.
double reference_loss(const MlpModel& m, const LabeledData& batch) {
  double total = 0.0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    std::vector<double> a(batch.row(s).begin(), batch.row(s).end());
    for (const auto& l : m.layers) {
      std::vector<double> z(l.out_dim);
      for (std::size_t o = 0; o < l.out_dim; ++o) {
        double acc = l.bias[o];
        for (std::size_t i = 0; i < l.in_dim; ++i) acc += l.weights[o * l.in_dim + i] * a[i];
        z[o] = l.activation == Activation::relu ? std::max(acc, 0.0) : acc;
      }
      a = std::move(z);
    }
    const double mx = *std::max_element(a.begin(), a.end());
    double se = 0.0;
    for (double v : a) se += std::exp(v - mx);
    total += std::log(se) + mx - a[batch.labels[s]];
  }
  return total / static_cast<double>(batch.size());
}

// Plain gradient-descent logistic regression; used only to confirm that a
// data set is linearly separable.
double logistic_training_accuracy(const LabeledData& d) {
  std::vector<double> w(d.n_features + 1, 0.0);
  for (int it = 0; it < 2000; ++it) {
    std::vector<double> g(w.size(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
      double z = w.back();
      for (std::size_t j = 0; j < d.n_features; ++j) z += w[j] * d.row(i)[j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - d.labels[i];
      for (std::size_t j = 0; j < d.n_features; ++j) g[j] += err * d.row(i)[j];
      g.back() += err;
    }
    for (std::size_t j = 0; j < w.size(); ++j) w[j] -= 0.5 * g[j] / static_cast<double>(d.size());
  }
  std::size_t ok = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    double z = w.back();
    for (std::size_t j = 0; j < d.n_features; ++j) z += w[j] * d.row(i)[j];
    ok += (z > 0) == (d.labels[i] == 1);
  }
  return static_cast<double>(ok) / static_cast<double>(d.size());
}

MlpModel zero_model(std::size_t in, std::size_t classes) {
  auto m = build_mlp({{4}}, in, classes, 0);
  for (auto& l : m.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return m;
}

}  // namespace

TEST_CASE("architecture presets") {
  const auto base = build_mlp(ArchSpec::baseline(), 31, 7, 0);
  REQUIRE(base.layers.size() == 4);
  const std::vector<std::pair<std::size_t, std::size_t>> dims = {{31, 16}, {16, 32}, {32, 32}, {32, 7}};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(base.layers[i].in_dim == dims[i].first);
    CHECK(base.layers[i].out_dim == dims[i].second);
    CHECK(base.layers[i].activation == (i == 3 ? Activation::softmax : Activation::relu));
  }
  CHECK(parameter_count(base) == 2343);
  CHECK(weight_payload_bytes(base) == 4 * (31 * 16 + 16 + 16 * 32 + 32 + 32 * 32 + 32 + 32 * 7 + 7));
  CHECK(build_mlp(ArchSpec::enhanced(), 31, 7, 0).layers.size() == 13);
  CHECK(build_mlp(ArchSpec::compact(), 31, 7, 0).layers.size() == 4);

  CHECK(ArchSpec::parse("baseline").hidden == ArchSpec::baseline().hidden);
  CHECK(ArchSpec::parse("enhanced").hidden == std::vector<std::size_t>(12, 64));
  CHECK(ArchSpec::parse("8,8,8").hidden == ArchSpec::compact().hidden);
  CHECK_THROWS_AS(ArchSpec::parse("huge"), ArgumentError);
  CHECK_THROWS_AS(ArchSpec::parse("8,0"), ArgumentError);
  CHECK_THROWS_AS(build_mlp({{}}, 31, 7, 0), ArgumentError);
  CHECK_THROWS_AS(build_mlp(ArchSpec::baseline(), 31, 1, 0), ArgumentError);
}

TEST_CASE("Glorot-uniform initialisation is seeded and bounded") {
  const auto a = build_mlp(ArchSpec::baseline(), 31, 7, 5);
  const auto b = build_mlp(ArchSpec::baseline(), 31, 7, 5);
  const auto c = build_mlp(ArchSpec::baseline(), 31, 7, 6);
  CHECK(serialize_mlp(a) == serialize_mlp(b));
  CHECK(serialize_mlp(a) != serialize_mlp(c));
  for (const auto& l : a.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    for (double w : l.weights) CHECK(std::abs(w) <= limit);
    for (double v : l.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("forward pass examples") {
  const auto z = zero_model(31, 7);
  const std::vector<double> x(31, 0.3);
  for (double p : forward(z, x)) CHECK(p == doctest::Approx(1.0 / 7.0));
  CHECK(predict(z, x) == 0);

  MlpModel id;
  id.n_features = 2;
  id.n_classes = 2;
  id.layers.push_back({2, 2, {1, 0, 0, 1}, {0, 0}, Activation::softmax});
  const std::vector<double> e0{1.0, 0.0};
  const auto p = forward(id, e0);
  CHECK(p[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1)));
  CHECK(p[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.2689).epsilon(1e-4));

  const std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(forward(id, wrong), DataError);
}

TEST_CASE("softmax normalisation, shift invariance and argmax") {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    std::vector<double> z(2 + rng.uniform_below(10));
    for (auto& v : z) v = 50 * rng.normal();
    auto p = z;
    softmax_inplace(p);
    auto shifted = z;
    const double c = rng.uniform(-1000, 1000);
    for (auto& v : shifted) v += c;
    softmax_inplace(shifted);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-6);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(std::abs(p[i] - shifted[i]) <= 1e-9);
    }
  }
  const std::vector<double> probs{0.1, 0.8, 0.1, 0, 0, 0, 0};
  CHECK(argmax(probs) == 1);
  const std::vector<double> tie{0.5, 0.5};
  CHECK(argmax(tie) == 0);

  // Independent argmax scan over random models and inputs.
  const auto m = build_mlp({{8, 8}}, 6, 5, 12);
  int agree = 0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<double> x(6);
    for (auto& v : x) v = rng.normal();
    const auto out = forward(m, x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < out.size(); ++i) {
      if (out[i] > out[best]) best = i;
    }
    agree += predict(m, x) == best;
  }
  CHECK(agree == 1000);
}

TEST_CASE("analytic gradient matches central differences") {
  Rng rng(17);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t in = 2 + rng.uniform_below(6), classes = 2 + rng.uniform_below(5);
    std::vector<std::size_t> hidden(1 + rng.uniform_below(3));
    for (auto& h : hidden) h = 1 + rng.uniform_below(8);
    auto model = build_mlp({hidden}, in, classes, 40 + static_cast<std::uint64_t>(trial));
    for (auto& l : model.layers) {
      for (auto& b : l.bias) b = rng.uniform(-0.3, 0.3);
    }
    LabeledData batch{in, {}, {}};
    for (int s = 0; s < 7; ++s) {
      for (std::size_t j = 0; j < in; ++j) batch.features.push_back(rng.normal());
      batch.labels.push_back(static_cast<std::uint8_t>(rng.uniform_below(classes)));
    }
    Gradients g;
    const double loss = loss_and_gradient(model, batch, &g);
    CHECK(loss == doctest::Approx(reference_loss(model, batch)).epsilon(1e-12));
    const double h = 1e-5;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
      auto probe = [&](std::vector<double>& params, const std::vector<double>& analytic) {
        REQUIRE(params.size() == analytic.size());
        for (std::size_t k = 0; k < params.size(); ++k) {
          const double keep = params[k];
          params[k] = keep + h;
          const double up = reference_loss(model, batch);
          params[k] = keep - h;
          const double down = reference_loss(model, batch);
          params[k] = keep;
          const double numeric = (up - down) / (2 * h);
          const double scale = std::max(std::abs(numeric), std::abs(analytic[k]));
          if (scale > 1e-7) worst = std::max(worst, std::abs(numeric - analytic[k]) / scale);
        }
      };
      probe(model.layers[li].weights, g.weights[li]);
      probe(model.layers[li].bias, g.bias[li]);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("cross-entropy stays finite for extreme logits") {
  MlpModel m;
  m.n_features = 1;
  m.n_classes = 2;
  m.layers.push_back({1, 2, {1e6, -1e6}, {0, 0}, Activation::softmax});
  LabeledData d{1, {1.0}, {1}};
  const double loss = mean_loss(m, d);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(2e6));
}

TEST_CASE("early stopping rule") {
  EarlyStopping es(10);
  CHECK_FALSE(es.update(1, 1.0));
  CHECK_FALSE(es.update(2, 0.5));
  std::size_t epoch = 3;
  bool stopped = false;
  for (; epoch < 100 && !stopped; ++epoch) stopped = es.update(epoch, 0.6);
  CHECK(stopped);
  CHECK(epoch - 1 == 12);
  CHECK(es.best_epoch() == 2);
  CHECK(es.best_loss() == 0.5);

  EarlyStopping strict(10);
  bool any = false;
  for (std::size_t e = 1; e <= 50; ++e) any = any || strict.update(e, 1.0 / static_cast<double>(e));
  CHECK_FALSE(any);
  CHECK(strict.best_epoch() == 50);

  // Equal loss is not an improvement.
  EarlyStopping flat(1);
  CHECK_FALSE(flat.update(1, 0.3));
  CHECK(flat.update(2, 0.3));
  CHECK_THROWS_AS(EarlyStopping(0), ArgumentError);
}

TEST_CASE("training separates linearly separable blobs") {
  auto data = fixtures::blobs(300, 2, 4, 21, 0.5);
  REQUIRE(logistic_training_accuracy(data) == 1.0);
  TrainConfig cfg;
  cfg.max_epochs = 60;
  cfg.seed = 4;
  auto [model, hist] = train(build_mlp({{8, 8}}, 4, 2, 4), data, cfg);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < data.size(); ++i) ok += predict(model, data.row(i)) == data.labels[i];
  CHECK(static_cast<double>(ok) / static_cast<double>(data.size()) >= 0.99);

  CHECK(hist.epochs_run == hist.val_loss.size());
  CHECK(hist.epochs_run - hist.best_epoch <= cfg.patience);
  CHECK(hist.val_loss[hist.best_epoch - 1] == *std::min_element(hist.val_loss.begin(), hist.val_loss.end()));
  // Returned weights are float32-representable.
  for (const auto& l : model.layers) {
    for (double w : l.weights) CHECK(static_cast<double>(static_cast<float>(w)) == w);
  }

  auto [again, hist2] = train(build_mlp({{8, 8}}, 4, 2, 4), data, cfg);
  CHECK(serialize_mlp(again) == serialize_mlp(model));
  CHECK(hist2.val_loss == hist.val_loss);
  CHECK(hist2.train_loss == hist.train_loss);
}

TEST_CASE("training restores the best epoch's weights") {
  // Noisy overlapping classes so validation loss eventually rises.
  auto data = fixtures::blobs(120, 3, 3, 8, 1.6);
  TrainConfig cfg;
  cfg.max_epochs = 300;
  cfg.patience = 5;
  cfg.learning_rate = 0.02;
  auto [model, hist] = train(build_mlp({{32, 32}}, 3, 3, 1), data, cfg);
  CHECK(hist.epochs_run < cfg.max_epochs);
  CHECK(hist.epochs_run == hist.best_epoch + cfg.patience);
  CHECK(hist.val_loss[hist.best_epoch - 1] == *std::min_element(hist.val_loss.begin(), hist.val_loss.end()));
}

TEST_CASE("model serialization") {
  auto m = build_mlp(ArchSpec::baseline(), 31, 7, 2);
  for (auto& l : m.layers) {
    for (auto& w : l.weights) w = static_cast<float>(w);
  }
  m.scaler.mean.assign(31, 1.5);
  m.scaler.std.assign(31, 2.0);
  m.label_names = {"a", "b", "c", "d", "e", "f", "g"};
  const auto bytes = serialize_mlp(m);
  const auto back = deserialize_mlp(bytes);
  CHECK(serialize_mlp(back) == bytes);
  CHECK(back.scaler == m.scaler);
  CHECK(back.label_names == m.label_names);
  for (std::size_t i = 0; i < m.layers.size(); ++i) CHECK(back.layers[i].weights == m.layers[i].weights);

  std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + 100);
  try {
    deserialize_mlp(cut);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected") != std::string::npos);
    CHECK(msg.find("have 100") != std::string::npos);
  }
  auto bad_act = bytes;
  bad_act[11] = 9;  // header 6, n_layers 1, u16 in, u16 out, then the activation byte
  try {
    deserialize_mlp(bad_act);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 11);
  }
  auto bad_version = bytes;
  bad_version[4] = 2;
  CHECK_THROWS_AS(deserialize_mlp(bad_version), FormatError);
}

TEST_CASE("working set accounting") {
  const auto base = build_mlp(ArchSpec::baseline(), 31, 7, 0);
  CHECK(working_set_bytes(base) == (32 + 32) * 8 + 7 * 8);
  const auto compact = build_mlp(ArchSpec::compact(), 31, 7, 0);
  CHECK(working_set_bytes(compact) < working_set_bytes(base));
}
