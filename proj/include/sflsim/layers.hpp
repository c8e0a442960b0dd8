#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sflsim/rng.hpp"
#include "sflsim/tensor.hpp"

namespace sflsim {

enum class LayerKind { dense, conv2d, relu, flatten, avgpool };

std::string layer_kind_name(LayerKind k);

/// Kind-specific integer hyperparameters. Unused fields stay zero.
struct LayerHyper {
  size_t in_dim = 0, out_dim = 0;        // dense
  size_t in_ch = 0, out_ch = 0;          // conv2d
  size_t kernel = 0, stride = 1;         // conv2d, avgpool
  size_t sample_rank = 0;                // flatten: rank of one unbatched input
};

/// One model layer. Parameter layout: dense -> {weight [out,in], bias [out]};
/// conv2d -> {weight [out_ch,in_ch,k,k], bias [out_ch]}; others parameter-free.
struct Layer {
  LayerKind kind;
  LayerHyper hyper;
  std::vector<Tensor> params;

  size_t param_count() const;
};

/// Cache of whatever backward needs from the matching forward call.
struct LayerContext {
  LayerKind kind;
  std::vector<size_t> input_shape;
  std::vector<double> input;  // dense/conv2d/relu keep the input values
};

Layer make_dense(size_t in_dim, size_t out_dim, Rng& rng);
Layer make_dense_params(size_t in_dim, size_t out_dim, Tensor weight, Tensor bias);
Layer make_conv2d(size_t in_ch, size_t out_ch, size_t kernel, size_t stride, Rng& rng);
Layer make_relu();
Layer make_flatten(size_t sample_rank);
Layer make_avgpool(size_t kernel, size_t stride);

/// Runs the layer on a single sample or a batch (leading batch dimension).
/// Throws on shape mismatch, naming the layer kind and both shapes.
std::pair<Tensor, LayerContext> forward(const Layer& layer, const Tensor& input);

struct BackwardResult {
  Tensor input_grad;
  std::vector<Tensor> param_grads;  // same order/shapes as layer.params
};

/// Exact analytic derivatives. `context` must come from a matching forward.
BackwardResult backward(const Layer& layer, const LayerContext& context,
                        const Tensor& upstream_grad);

/// Output shape of the layer for a given input shape (no compute).
std::vector<size_t> output_shape(const Layer& layer, const std::vector<size_t>& input_shape);

/// Forward FLOPs per sample: dense 2*in*out, conv 2*k^2*Cin*Cout*Hout*Wout,
/// relu/pool/flatten count as zero.
size_t layer_flops(const Layer& layer, const std::vector<size_t>& sample_shape);

// ---- loss ----

struct LossResult {
  double loss;
  Tensor logit_grad;
};

/// Log-sum-exp stabilized cross entropy for one rank-1 logits vector.
LossResult softmax_cross_entropy(const Tensor& logits, size_t label);

/// Mean cross entropy over a batch of logits [N,C]; grad is d(mean loss)/d(logits).
LossResult softmax_cross_entropy_batch(const Tensor& logits, const std::vector<size_t>& labels);

// ---- optimizer ----

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_param(size_t n, double lr);
};

/// Standard bias-corrected Adam update; increments state.t by one.
void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state);

// ---- gradient oracle ----

/// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2 eps) per coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

}  // namespace sflsim
