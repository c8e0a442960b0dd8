#include <cmath>

#include "doctest.h"
#include "sflsim/layers.hpp"

using namespace sflsim;

namespace {

// max relative error against the central-difference oracle
double grad_rel_err(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

Tensor random_tensor(std::vector<size_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values) v = rng.normal();
  return t;
}

// checks d(sum(c .* forward(x))) / dx and /dparams against finite differences
void check_layer_gradients(const Layer& layer, const Tensor& input, uint64_t seed) {
  Rng crng(seed);
  auto [out, ctx] = forward(layer, input);
  Tensor cvec = random_tensor(out.shape, crng);

  auto loss_at = [&](const Layer& l, const Tensor& x) {
    auto [o, c] = forward(l, x);
    double s = 0.0;
    for (size_t i = 0; i < o.size(); ++i) s += cvec.values[i] * o.values[i];
    return s;
  };

  BackwardResult br = backward(layer, ctx, cvec);

  Tensor fd_input = finite_diff_grad([&](const Tensor& x) { return loss_at(layer, x); }, input,
                                     1e-5);
  CHECK(grad_rel_err(br.input_grad.values, fd_input.values) < 1e-3);

  for (size_t pi = 0; pi < layer.params.size(); ++pi) {
    Tensor fd_param = finite_diff_grad(
        [&](const Tensor& p) {
          Layer probe = layer;
          probe.params[pi] = p;
          return loss_at(probe, input);
        },
        layer.params[pi], 1e-5);
    CHECK(grad_rel_err(br.param_grads[pi].values, fd_param.values) < 1e-3);
  }
}

}  // namespace

TEST_CASE("dense identity maps input through") {
  Tensor w({2, 2}, {1, 0, 0, 1});
  Layer l = make_dense_params(2, 2, w, Tensor::zeros({2}));
  auto [out, ctx] = forward(l, Tensor::vec({1.0, 2.0}));
  CHECK(out.values == std::vector<double>{1.0, 2.0});
}

TEST_CASE("relu clamps negatives") {
  Layer l = make_relu();
  auto [out, ctx] = forward(l, Tensor::vec({-1.0, 0.0, 2.5}));
  CHECK(out.values == std::vector<double>{0.0, 0.0, 2.5});
}

TEST_CASE("dense hand arithmetic") {
  Tensor w({2, 2}, {1, 2, 3, 4});
  Tensor b({2}, {1, 1});
  Layer l = make_dense_params(2, 2, w, b);
  auto [out, ctx] = forward(l, Tensor::vec({1.0, 1.0}));
  CHECK(out.values == std::vector<double>{4.0, 8.0});
}

TEST_CASE("dense shape mismatch names the layer and shapes") {
  Rng rng(1);
  Layer l = make_dense(4, 3, rng);
  try {
    forward(l, Tensor::vec({1.0, 2.0}));
    FAIL("expected a shape error");
  } catch (const std::invalid_argument& e) {
    std::string msg = e.what();
    CHECK(msg.find("dense") != std::string::npos);
    CHECK(msg.find("[2]") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
}

TEST_CASE("relu backward masks by sign of the input") {
  Layer l = make_relu();
  auto [out, ctx] = forward(l, Tensor::vec({-1.0, 2.0}));
  BackwardResult br = backward(l, ctx, Tensor::vec({1.0, 1.0}));
  CHECK(br.input_grad.values == std::vector<double>{0.0, 1.0});
}

TEST_CASE("dense identity-weight backward passes the upstream gradient") {
  Tensor w({2, 2}, {1, 0, 0, 1});
  Layer l = make_dense_params(2, 2, w, Tensor::zeros({2}));
  auto [out, ctx] = forward(l, Tensor::vec({3.0, -2.0}));
  BackwardResult br = backward(l, ctx, Tensor::vec({0.5, 1.5}));
  CHECK(br.input_grad.values == std::vector<double>{0.5, 1.5});
}

TEST_CASE("backward rejects a mismatched context") {
  Rng rng(2);
  Layer dense = make_dense(3, 2, rng);
  Layer relu = make_relu();
  auto [out, relu_ctx] = forward(relu, Tensor::vec({1.0, -1.0, 2.0}));
  CHECK_THROWS_AS(backward(dense, relu_ctx, Tensor::vec({1.0, 1.0})), std::invalid_argument);
}

TEST_CASE("every layer kind passes the finite-difference oracle") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed * 31 + 1);
    SUBCASE("") {}  // keep one body; loop covers seeds

    Layer dense = make_dense(5, 4, rng);
    check_layer_gradients(dense, random_tensor({5}, rng), seed);
    check_layer_gradients(dense, random_tensor({3, 5}, rng), seed + 100);

    Layer conv = make_conv2d(2, 3, 2, 1, rng);
    check_layer_gradients(conv, random_tensor({2, 4, 4}, rng), seed + 200);
    check_layer_gradients(conv, random_tensor({2, 2, 4, 4}, rng), seed + 300);

    check_layer_gradients(make_relu(), random_tensor({7}, rng), seed + 400);
    check_layer_gradients(make_avgpool(2, 2), random_tensor({2, 4, 4}, rng), seed + 500);
    check_layer_gradients(make_flatten(3), random_tensor({2, 3, 3}, rng), seed + 600);
  }
}

TEST_CASE("forward is pure: repeated calls are bitwise identical") {
  Rng rng(9);
  Layer conv = make_conv2d(3, 4, 2, 2, rng);
  Tensor x = random_tensor({3, 8, 8}, rng);
  auto [a, c1] = forward(conv, x);
  auto [b, c2] = forward(conv, x);
  CHECK(a.values == b.values);
}

TEST_CASE("batched dense equals per-sample dense bitwise") {
  Rng rng(13);
  Layer dense = make_dense(6, 3, rng);
  Tensor batch = random_tensor({4, 6}, rng);
  auto [bout, bctx] = forward(dense, batch);
  for (size_t s = 0; s < 4; ++s) {
    Tensor one({6}, std::vector<double>(batch.values.begin() + s * 6,
                                        batch.values.begin() + (s + 1) * 6));
    auto [oout, octx] = forward(dense, one);
    for (size_t i = 0; i < 3; ++i) CHECK(oout.values[i] == bout.values[s * 3 + i]);
  }
}

TEST_CASE("softmax cross entropy on symmetric logits") {
  LossResult r = softmax_cross_entropy(Tensor::vec({0.0, 0.0}), 0);
  CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(r.logit_grad.values[0] == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(r.logit_grad.values[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy is log-sum-exp stabilized") {
  LossResult r = softmax_cross_entropy(Tensor::vec({1000.0, 0.0}), 0);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss < 1e-6);

  LossResult big = softmax_cross_entropy(Tensor::vec({1e4, -1e4, 0.0}), 1);
  CHECK(std::isfinite(big.loss));
  for (double g : big.logit_grad.values) CHECK(std::isfinite(g));
}

TEST_CASE("softmax cross entropy matches direct evaluation") {
  // loss = ln(e^1 + e^2 + e^3) - 3, evaluated directly as the oracle
  double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  LossResult r = softmax_cross_entropy(Tensor::vec({1.0, 2.0, 3.0}), 2);
  CHECK(r.loss == doctest::Approx(expected).epsilon(1e-12));
  CHECK(r.loss == doctest::Approx(0.40760596444438).epsilon(1e-10));
}

TEST_CASE("softmax cross entropy equals -log softmax[label] on well-scaled logits") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits = random_tensor({6}, rng);
    size_t label = trial % 6;
    LossResult r = softmax_cross_entropy(logits, label);
    double denom = 0.0;
    for (double v : logits.values) denom += std::exp(v);
    double direct = -std::log(std::exp(logits.values[label]) / denom);
    CHECK(std::abs(r.loss - direct) < 1e-12);
  }
}

TEST_CASE("softmax cross entropy rejects out-of-range labels") {
  CHECK_THROWS_AS(softmax_cross_entropy(Tensor::vec({0.0, 0.0}), 2), std::out_of_range);
}

TEST_CASE("adam leaves params unchanged on zero gradients") {
  std::vector<double> p{1.0, -2.0, 3.0};
  AdamState st = AdamState::for_param(3, 1e-4);
  adam_step(p, {0.0, 0.0, 0.0}, st);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(st.t == 1);
}

TEST_CASE("adam first step moves by about lr") {
  std::vector<double> p{1.0};
  AdamState st = AdamState::for_param(1, 0.1);
  adam_step(p, {1.0}, st);
  CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-7));
}

TEST_CASE("adam is deterministic across replicas") {
  std::vector<double> p1{0.5, -0.5}, p2{0.5, -0.5};
  AdamState s1 = AdamState::for_param(2, 1e-3), s2 = AdamState::for_param(2, 1e-3);
  for (int i = 0; i < 20; ++i) {
    std::vector<double> g{0.1 * i, -0.2};
    adam_step(p1, g, s1);
    adam_step(p2, g, s2);
  }
  CHECK(p1 == p2);
}

TEST_CASE("adam shape mismatch is rejected") {
  std::vector<double> p{1.0, 2.0};
  AdamState st = AdamState::for_param(2, 1e-4);
  CHECK_THROWS_AS(adam_step(p, {1.0}, st), std::invalid_argument);
}

TEST_CASE("adam defaults match the recorded configuration") {
  AdamState st = AdamState::for_param(1, 1e-4);
  CHECK(st.lr == 1e-4);
  CHECK(st.beta1 == 0.9);
  CHECK(st.beta2 == 0.999);
  CHECK(st.eps == 1e-8);
}

TEST_CASE("finite differences recover simple derivatives") {
  auto square = [](const Tensor& x) { return x.values[0] * x.values[0]; };
  Tensor g = finite_diff_grad(square, Tensor::vec({3.0}), 1e-5);
  CHECK(g.values[0] == doctest::Approx(6.0).epsilon(1e-8));

  auto constant = [](const Tensor&) { return 4.2; };
  Tensor gz = finite_diff_grad(constant, Tensor::vec({1.0, 2.0, 3.0}), 1e-5);
  for (double v : gz.values) CHECK(v == 0.0);

  auto total = [](const Tensor& x) {
    double s = 0.0;
    for (double v : x.values) s += v;
    return s;
  };
  Tensor go = finite_diff_grad(total, Tensor::vec({1.0, -1.0, 0.5}), 1e-5);
  for (double v : go.values) CHECK(v == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("layer outputs stay finite after forward and backward") {
  Rng rng(23);
  Layer dense = make_dense(8, 8, rng);
  Tensor x = random_tensor({4, 8}, rng);
  auto [out, ctx] = forward(dense, x);
  CHECK_NOTHROW(assert_finite(out, "dense out"));
  BackwardResult br = backward(dense, ctx, random_tensor({4, 8}, rng));
  CHECK_NOTHROW(assert_finite(br.input_grad, "dense grad"));
}
