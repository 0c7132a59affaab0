#include <doctest.h>

#include <cmath>

#include "aimguard/error.hpp"
#include "aimguard/inspector.hpp"
#include "aimguard/nn/model.hpp"
#include "fixtures.hpp"

using namespace aimguard;
using nlohmann::json;

namespace {

nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  auto rng = util::make_rng(seed);
  nn::Tensor t(std::move(shape));
  for (auto& v : t.values()) v = util::uniform(rng, -scale, scale);
  return t;
}

std::vector<std::vector<double>> rows_of(const nn::Tensor& t) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < t.dim(0); ++i) out.emplace_back(t.row(i).begin(), t.row(i).end());
  return out;
}

}  // namespace

TEST_CASE("gru forward matches the scalar oracle") {
  const nn::Model model(json{{"layers", {{{"type", "gru"}, {"units", 5}}}}}, {7, 3});
  auto params = model.init_params(4);
  // non-zero biases so every term is exercised
  for (const char* b : {"00_gru.b_z", "00_gru.b_r", "00_gru.b_h"}) params.get(b) = random_tensor({5}, 17, 0.5);
  const auto x = random_tensor({7, 3}, 5);
  const auto y = model.forward(params, x);
  oracle::GruWeights g;
  const auto v = [&](const char* n) { return params.get(std::string("00_gru.") + n).values(); };
  g = {v("W_z"), v("W_r"), v("W_h"), v("U_z"), v("U_r"), v("U_h"), v("b_z"), v("b_r"), v("b_h")};
  const auto expected = oracle::gru(rows_of(x), g, 5);
  REQUIRE(y.shape() == nn::Shape{7, 5});
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t i = 0; i < 5; ++i) CHECK(y.at(t, i) == doctest::Approx(expected[t][i]).epsilon(1e-13));
  }
}

TEST_CASE("conv1d forward matches the scalar oracle") {
  const nn::Model model(json{{"layers", {{{"type", "conv1d"}, {"filters", 4}, {"kernel", 3}}}}}, {9, 2});
  auto params = model.init_params(6);
  params.get("00_conv1d.bias") = random_tensor({4}, 8);
  CHECK(params.get("00_conv1d.kernel").shape() == nn::Shape{4, 3, 2});
  const auto x = random_tensor({9, 2}, 7);
  const auto y = model.forward(params, x);
  const auto expected =
      oracle::conv1d(rows_of(x), params.get("00_conv1d.kernel").values(), params.get("00_conv1d.bias").values(), 4, 3);
  REQUIRE(y.shape() == nn::Shape{7, 4});
  for (std::size_t t = 0; t < 7; ++t) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(y.at(t, k) == doctest::Approx(expected[t][k]).epsilon(1e-13));
  }
}

TEST_CASE("dense, pooling and activations") {
  const nn::Model model(json{{"layers",
                              {{{"type", "global_max_pool"}},
                               {{"type", "dense"}, {"units", 1}},
                               {{"type", "sigmoid"}}}}},
                        {3, 2});
  auto params = model.init_params(1);
  params.get("01_dense.W") = nn::Tensor({1, 2}, {2.0, -1.0});
  params.get("01_dense.b") = nn::Tensor({1}, {0.5});
  const nn::Tensor x({3, 2}, {1, 4, 3, -2, 0, 0});
  // max over time = (3, 4); 2*3 - 4 + 0.5 = 2.5
  CHECK(model.predict(params, x) == doctest::Approx(1.0 / (1.0 + std::exp(-2.5))));
  CHECK(model.output_shape() == nn::Shape{1});
}

TEST_CASE("finite differences agree with backprop on every layer") {
  const auto model = inspector::make_subsequence_model(inspector::tiny_subsequence_architecture(), 6);
  const auto params = model.init_params(12);
  std::vector<nn::Tensor> inputs;
  std::vector<int> labels;
  for (int i = 0; i < 6; ++i) {
    inputs.push_back(random_tensor({6, 8}, 100 + i));
    labels.push_back(i % 2);
  }
  const auto report = nn::finite_diff_check(nn::bce_objective(model, inputs, labels, {1.0, 1.5}), params);
  CHECK(report.checked == params.scalar_count());
  CHECK(report.max_rel_error < 1e-4);
  for (const auto& [layer, err] : report.per_layer) {
    INFO(layer);
    CHECK(err < 1e-4);
  }

  const nn::Model agg(inspector::default_aggregator_architecture(), {11});
  const auto agg_report = nn::finite_diff_check(
      nn::output_sum_objective(agg, {random_tensor({11}, 3), random_tensor({11}, 4)}), agg.init_params(2));
  CHECK(agg_report.max_rel_error < 1e-4);
}

TEST_CASE("input gradient matches finite differences") {
  const auto model = inspector::make_subsequence_model(inspector::tiny_subsequence_architecture(), 6);
  const auto params = model.init_params(3);
  auto x = random_tensor({6, 8}, 9);
  nn::Tensor dx;
  const double p = model.predict_with_input_gradient(params, x, dx);
  CHECK(p == model.predict(params, x));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + 1e-6;
    const double up = model.predict(params, x);
    x[i] = keep - 1e-6;
    const double down = model.predict(params, x);
    x[i] = keep;
    CHECK(dx[i] == doctest::Approx((up - down) / 2e-6).epsilon(1e-5));
  }
}

TEST_CASE("parameters survive a json round-trip bit for bit") {
  const auto model = inspector::make_subsequence_model(inspector::tiny_subsequence_architecture(), 6);
  auto params = model.init_params(21);
  params.get("00_gru.b_z")[0] = -0.0;
  params.get("00_gru.b_z")[1] = 1e-310;
  params.get("00_gru.b_z")[2] = 0.1 + 0.2;
  const auto text = params.to_json().dump();
  const auto back = nn::ParamSet::from_json(json::parse(text));
  CHECK(back == params);
  CHECK(std::signbit(back.get("00_gru.b_z")[0]));
  const auto m2 = nn::Model::from_json(json::parse(model.to_json().dump()));
  const auto x = random_tensor({6, 8}, 2);
  CHECK(m2.predict(back, x) == model.predict(params, x));
}

TEST_CASE("weighted binary cross-entropy") {
  const std::vector<double> p{0.9, 0.2, 0.0};
  const std::vector<int> y{1, 0, 1};
  std::vector<double> grad;
  const double loss = nn::weighted_bce(p, y, {1.0, 2.0}, &grad);
  const double expected = -(2.0 * std::log(0.9) + std::log(0.8) + 2.0 * std::log(1e-12)) / 3.0;
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(grad[0] == doctest::Approx(-2.0 / 0.9 / 3.0));
  CHECK(grad[1] == doctest::Approx(1.0 / 0.8 / 3.0));

  const std::vector<int> labels{0, 0, 0, 1};
  const auto w = nn::balanced_class_weights(labels);
  CHECK(w.negative == doctest::Approx(4.0 / 6.0));
  CHECK(w.positive == doctest::Approx(2.0));
  const std::vector<int> one_class{1, 1};
  CHECK_THROWS_AS(nn::balanced_class_weights(one_class), Error);
}

TEST_CASE("adam first step moves each parameter by lr against the gradient sign") {
  nn::ParamSet p;
  p.add("a", nn::Tensor({3}, {1.0, 2.0, 3.0}));
  auto g = p.zeros_like();
  g.get("a") = nn::Tensor({3}, {0.5, -4.0, 0.0});
  nn::Adam opt(p, {0.01, 0.9, 0.999, 1e-8});
  opt.step(p, g);
  CHECK(p.get("a")[0] == doctest::Approx(1.0 - 0.01 * 0.5 / (0.5 + 1e-8)).epsilon(1e-14));
  CHECK(p.get("a")[1] == doctest::Approx(2.0 + 0.01 * 4.0 / (4.0 + 1e-8)).epsilon(1e-14));
  CHECK(p.get("a")[2] == 3.0);
  // second step with the same gradient: m_hat = g, v_hat = g^2 again
  opt.step(p, g);
  CHECK(p.get("a")[0] == doctest::Approx(1.0 - 0.02).epsilon(1e-9));
  CHECK(opt.steps() == 2);
  CHECK(nn::Adam::from_json(json::parse(opt.to_json().dump())) == opt);
}
