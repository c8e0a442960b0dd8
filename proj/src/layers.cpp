#include "sflsim/layers.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sflsim {

std::string layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::avgpool: return "avgpool";
  }
  return "?";
}

size_t Layer::param_count() const {
  size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

namespace {

[[noreturn]] void shape_error(const Layer& layer, const std::vector<size_t>& got,
                              const std::string& expected) {
  std::ostringstream os;
  os << layer_kind_name(layer.kind) << " forward: input shape " << shape_str(got)
     << " incompatible, expected " << expected;
  throw std::invalid_argument(os.str());
}

// Glorot-style uniform init in [-a, a], a = sqrt(6/(fan_in+fan_out)).
void init_uniform(Tensor& t, size_t fan_in, size_t fan_out, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values) v = rng.uniform(-a, a);
}

struct ConvDims {
  size_t n, cin, h, w, hout, wout;
  bool batched;
};

ConvDims conv_dims(const Layer& layer, const std::vector<size_t>& in_shape) {
  const auto& hp = layer.hyper;
  ConvDims d{};
  if (in_shape.size() == 4) {
    d.batched = true;
    d.n = in_shape[0];
    d.cin = in_shape[1];
    d.h = in_shape[2];
    d.w = in_shape[3];
  } else if (in_shape.size() == 3) {
    d.batched = false;
    d.n = 1;
    d.cin = in_shape[0];
    d.h = in_shape[1];
    d.w = in_shape[2];
  } else {
    shape_error(layer, in_shape, "[C,H,W] or [N,C,H,W]");
  }
  size_t want_cin = layer.kind == LayerKind::conv2d ? hp.in_ch : d.cin;
  if (d.cin != want_cin || d.h < hp.kernel || d.w < hp.kernel) {
    std::ostringstream os;
    os << "[" << want_cin << ",>=" << hp.kernel << ",>=" << hp.kernel << "]";
    shape_error(layer, in_shape, os.str());
  }
  d.hout = (d.h - hp.kernel) / hp.stride + 1;
  d.wout = (d.w - hp.kernel) / hp.stride + 1;
  return d;
}

}  // namespace

Layer make_dense(size_t in_dim, size_t out_dim, Rng& rng) {
  Layer l;
  l.kind = LayerKind::dense;
  l.hyper.in_dim = in_dim;
  l.hyper.out_dim = out_dim;
  Tensor w = Tensor::zeros({out_dim, in_dim});
  init_uniform(w, in_dim, out_dim, rng);
  l.params = {std::move(w), Tensor::zeros({out_dim})};
  return l;
}

Layer make_dense_params(size_t in_dim, size_t out_dim, Tensor weight, Tensor bias) {
  if (weight.shape != std::vector<size_t>{out_dim, in_dim} ||
      bias.shape != std::vector<size_t>{out_dim}) {
    throw std::invalid_argument("dense: param shapes inconsistent with dims");
  }
  Layer l;
  l.kind = LayerKind::dense;
  l.hyper.in_dim = in_dim;
  l.hyper.out_dim = out_dim;
  l.params = {std::move(weight), std::move(bias)};
  return l;
}

Layer make_conv2d(size_t in_ch, size_t out_ch, size_t kernel, size_t stride, Rng& rng) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("conv2d: kernel and stride must be >= 1");
  Layer l;
  l.kind = LayerKind::conv2d;
  l.hyper.in_ch = in_ch;
  l.hyper.out_ch = out_ch;
  l.hyper.kernel = kernel;
  l.hyper.stride = stride;
  Tensor w = Tensor::zeros({out_ch, in_ch, kernel, kernel});
  init_uniform(w, in_ch * kernel * kernel, out_ch * kernel * kernel, rng);
  l.params = {std::move(w), Tensor::zeros({out_ch})};
  return l;
}

Layer make_relu() {
  Layer l;
  l.kind = LayerKind::relu;
  return l;
}

Layer make_flatten(size_t sample_rank) {
  Layer l;
  l.kind = LayerKind::flatten;
  l.hyper.sample_rank = sample_rank;
  return l;
}

Layer make_avgpool(size_t kernel, size_t stride) {
  if (kernel < 1 || stride < 1) throw std::invalid_argument("avgpool: kernel and stride must be >= 1");
  Layer l;
  l.kind = LayerKind::avgpool;
  l.hyper.kernel = kernel;
  l.hyper.stride = stride;
  return l;
}

std::pair<Tensor, LayerContext> forward(const Layer& layer, const Tensor& input) {
  input.check_invariants();
  LayerContext ctx;
  ctx.kind = layer.kind;
  ctx.input_shape = input.shape;

  switch (layer.kind) {
    case LayerKind::dense: {
      const auto& hp = layer.hyper;
      size_t n = 1, in = 0;
      bool batched = false;
      if (input.rank() == 1) {
        in = input.shape[0];
      } else if (input.rank() == 2) {
        batched = true;
        n = input.shape[0];
        in = input.shape[1];
      } else {
        shape_error(layer, input.shape, "[in] or [N,in]");
      }
      if (in != hp.in_dim) {
        std::ostringstream os;
        os << "[" << hp.in_dim << "] or [N," << hp.in_dim << "]";
        shape_error(layer, input.shape, os.str());
      }
      const auto& w = layer.params[0].values;
      const auto& b = layer.params[1].values;
      Tensor out = batched ? Tensor::zeros({n, hp.out_dim}) : Tensor::zeros({hp.out_dim});
      for (size_t s = 0; s < n; ++s) {
        const double* x = input.values.data() + s * in;
        double* y = out.values.data() + s * hp.out_dim;
        for (size_t o = 0; o < hp.out_dim; ++o) {
          const double* wr = w.data() + o * in;
          double acc = b[o];
          for (size_t i = 0; i < in; ++i) acc += wr[i] * x[i];
          y[o] = acc;
        }
      }
      ctx.input = input.values;
      return {std::move(out), std::move(ctx)};
    }

    case LayerKind::conv2d: {
      const auto& hp = layer.hyper;
      ConvDims d = conv_dims(layer, input.shape);
      Tensor out = d.batched ? Tensor::zeros({d.n, hp.out_ch, d.hout, d.wout})
                             : Tensor::zeros({hp.out_ch, d.hout, d.wout});
      const auto& w = layer.params[0].values;
      const auto& b = layer.params[1].values;
      const size_t k = hp.kernel, st = hp.stride;
      for (size_t s = 0; s < d.n; ++s) {
        const double* x = input.values.data() + s * d.cin * d.h * d.w;
        double* y = out.values.data() + s * hp.out_ch * d.hout * d.wout;
        for (size_t co = 0; co < hp.out_ch; ++co) {
          for (size_t oh = 0; oh < d.hout; ++oh) {
            for (size_t ow = 0; ow < d.wout; ++ow) {
              double acc = b[co];
              for (size_t ci = 0; ci < d.cin; ++ci) {
                for (size_t kh = 0; kh < k; ++kh) {
                  const double* xr = x + (ci * d.h + oh * st + kh) * d.w + ow * st;
                  const double* wr = w.data() + ((co * d.cin + ci) * k + kh) * k;
                  for (size_t kw = 0; kw < k; ++kw) acc += wr[kw] * xr[kw];
                }
              }
              y[(co * d.hout + oh) * d.wout + ow] = acc;
            }
          }
        }
      }
      ctx.input = input.values;
      return {std::move(out), std::move(ctx)};
    }

    case LayerKind::relu: {
      Tensor out = input;
      out.grad.reset();
      for (auto& v : out.values) v = v > 0.0 ? v : 0.0;
      ctx.input = input.values;
      return {std::move(out), std::move(ctx)};
    }

    case LayerKind::flatten: {
      size_t sr = layer.hyper.sample_rank;
      if (input.rank() != sr && input.rank() != sr + 1) {
        std::ostringstream os;
        os << "rank " << sr << " or " << sr + 1;
        shape_error(layer, input.shape, os.str());
      }
      Tensor out = input;
      out.grad.reset();
      if (input.rank() == sr) {
        out.shape = {input.size()};
      } else {
        size_t n = input.shape[0];
        out.shape = {n, input.size() / n};
      }
      return {std::move(out), std::move(ctx)};
    }

    case LayerKind::avgpool: {
      const auto& hp = layer.hyper;
      ConvDims d = conv_dims(layer, input.shape);
      Tensor out = d.batched ? Tensor::zeros({d.n, d.cin, d.hout, d.wout})
                             : Tensor::zeros({d.cin, d.hout, d.wout});
      const double inv = 1.0 / static_cast<double>(hp.kernel * hp.kernel);
      for (size_t s = 0; s < d.n; ++s) {
        const double* x = input.values.data() + s * d.cin * d.h * d.w;
        double* y = out.values.data() + s * d.cin * d.hout * d.wout;
        for (size_t c = 0; c < d.cin; ++c) {
          for (size_t oh = 0; oh < d.hout; ++oh) {
            for (size_t ow = 0; ow < d.wout; ++ow) {
              double acc = 0.0;
              for (size_t kh = 0; kh < hp.kernel; ++kh)
                for (size_t kw = 0; kw < hp.kernel; ++kw)
                  acc += x[(c * d.h + oh * hp.stride + kh) * d.w + ow * hp.stride + kw];
              y[(c * d.hout + oh) * d.wout + ow] = acc * inv;
            }
          }
        }
      }
      return {std::move(out), std::move(ctx)};
    }
  }
  throw std::logic_error("unreachable layer kind");
}

BackwardResult backward(const Layer& layer, const LayerContext& context,
                        const Tensor& upstream_grad) {
  if (context.kind != layer.kind) {
    throw std::invalid_argument("backward: context kind " + layer_kind_name(context.kind) +
                                " does not match layer " + layer_kind_name(layer.kind));
  }
  auto expect_up = output_shape(layer, context.input_shape);
  if (upstream_grad.shape != expect_up) {
    throw std::invalid_argument("backward(" + layer_kind_name(layer.kind) +
                                "): upstream grad shape " + shape_str(upstream_grad.shape) +
                                " != forward output shape " + shape_str(expect_up));
  }

  BackwardResult res;
  res.input_grad = Tensor::zeros(context.input_shape);

  switch (layer.kind) {
    case LayerKind::dense: {
      const auto& hp = layer.hyper;
      size_t n = context.input_shape.size() == 2 ? context.input_shape[0] : 1;
      size_t in = hp.in_dim, out = hp.out_dim;
      const auto& w = layer.params[0].values;
      Tensor wg = Tensor::zeros(layer.params[0].shape);
      Tensor bg = Tensor::zeros(layer.params[1].shape);
      for (size_t s = 0; s < n; ++s) {
        const double* up = upstream_grad.values.data() + s * out;
        const double* x = context.input.data() + s * in;
        double* ig = res.input_grad.values.data() + s * in;
        for (size_t o = 0; o < out; ++o) {
          double g = up[o];
          bg.values[o] += g;
          const double* wr = w.data() + o * in;
          double* wgr = wg.values.data() + o * in;
          for (size_t i = 0; i < in; ++i) {
            ig[i] += g * wr[i];
            wgr[i] += g * x[i];
          }
        }
      }
      res.param_grads = {std::move(wg), std::move(bg)};
      return res;
    }

    case LayerKind::conv2d: {
      const auto& hp = layer.hyper;
      ConvDims d = conv_dims(layer, context.input_shape);
      const auto& w = layer.params[0].values;
      Tensor wg = Tensor::zeros(layer.params[0].shape);
      Tensor bg = Tensor::zeros(layer.params[1].shape);
      const size_t k = hp.kernel, st = hp.stride;
      for (size_t s = 0; s < d.n; ++s) {
        const double* up = upstream_grad.values.data() + s * hp.out_ch * d.hout * d.wout;
        const double* x = context.input.data() + s * d.cin * d.h * d.w;
        double* ig = res.input_grad.values.data() + s * d.cin * d.h * d.w;
        for (size_t co = 0; co < hp.out_ch; ++co) {
          for (size_t oh = 0; oh < d.hout; ++oh) {
            for (size_t ow = 0; ow < d.wout; ++ow) {
              double g = up[(co * d.hout + oh) * d.wout + ow];
              bg.values[co] += g;
              for (size_t ci = 0; ci < d.cin; ++ci) {
                for (size_t kh = 0; kh < k; ++kh) {
                  size_t row = (ci * d.h + oh * st + kh) * d.w + ow * st;
                  const double* wr = w.data() + ((co * d.cin + ci) * k + kh) * k;
                  double* wgr = wg.values.data() + ((co * d.cin + ci) * k + kh) * k;
                  for (size_t kw = 0; kw < k; ++kw) {
                    ig[row + kw] += g * wr[kw];
                    wgr[kw] += g * x[row + kw];
                  }
                }
              }
            }
          }
        }
      }
      res.param_grads = {std::move(wg), std::move(bg)};
      return res;
    }

    case LayerKind::relu: {
      for (size_t i = 0; i < context.input.size(); ++i)
        res.input_grad.values[i] = context.input[i] > 0.0 ? upstream_grad.values[i] : 0.0;
      return res;
    }

    case LayerKind::flatten: {
      res.input_grad.values = upstream_grad.values;
      return res;
    }

    case LayerKind::avgpool: {
      const auto& hp = layer.hyper;
      ConvDims d = conv_dims(layer, context.input_shape);
      const double inv = 1.0 / static_cast<double>(hp.kernel * hp.kernel);
      for (size_t s = 0; s < d.n; ++s) {
        const double* up = upstream_grad.values.data() + s * d.cin * d.hout * d.wout;
        double* ig = res.input_grad.values.data() + s * d.cin * d.h * d.w;
        for (size_t c = 0; c < d.cin; ++c) {
          for (size_t oh = 0; oh < d.hout; ++oh) {
            for (size_t ow = 0; ow < d.wout; ++ow) {
              double g = up[(c * d.hout + oh) * d.wout + ow] * inv;
              for (size_t kh = 0; kh < hp.kernel; ++kh)
                for (size_t kw = 0; kw < hp.kernel; ++kw)
                  ig[(c * d.h + oh * hp.stride + kh) * d.w + ow * hp.stride + kw] += g;
            }
          }
        }
      }
      return res;
    }
  }
  throw std::logic_error("unreachable layer kind");
}

std::vector<size_t> output_shape(const Layer& layer, const std::vector<size_t>& input_shape) {
  switch (layer.kind) {
    case LayerKind::dense:
      if (input_shape.size() == 1) return {layer.hyper.out_dim};
      return {input_shape[0], layer.hyper.out_dim};
    case LayerKind::conv2d: {
      ConvDims d = conv_dims(layer, input_shape);
      if (d.batched) return {d.n, layer.hyper.out_ch, d.hout, d.wout};
      return {layer.hyper.out_ch, d.hout, d.wout};
    }
    case LayerKind::relu:
      return input_shape;
    case LayerKind::flatten: {
      size_t sr = layer.hyper.sample_rank;
      if (input_shape.size() == sr) return {shape_product(input_shape)};
      size_t n = input_shape[0];
      return {n, shape_product(input_shape) / n};
    }
    case LayerKind::avgpool: {
      ConvDims d = conv_dims(layer, input_shape);
      if (d.batched) return {d.n, d.cin, d.hout, d.wout};
      return {d.cin, d.hout, d.wout};
    }
  }
  throw std::logic_error("unreachable layer kind");
}

size_t layer_flops(const Layer& layer, const std::vector<size_t>& sample_shape) {
  switch (layer.kind) {
    case LayerKind::dense:
      return 2 * layer.hyper.in_dim * layer.hyper.out_dim;
    case LayerKind::conv2d: {
      ConvDims d = conv_dims(layer, sample_shape);
      return 2 * layer.hyper.kernel * layer.hyper.kernel * layer.hyper.in_ch *
             layer.hyper.out_ch * d.hout * d.wout;
    }
    default:
      return 0;
  }
}

LossResult softmax_cross_entropy(const Tensor& logits, size_t label) {
  if (logits.rank() != 1) {
    throw std::invalid_argument("softmax_cross_entropy: logits must be rank-1, got " +
                                shape_str(logits.shape));
  }
  if (label >= logits.size()) {
    throw std::out_of_range("softmax_cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(logits.size()) + " classes");
  }
  double mx = logits.values[0];
  for (double v : logits.values) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits.values) sum += std::exp(v - mx);
  double lse = mx + std::log(sum);

  LossResult r;
  r.loss = lse - logits.values[label];
  r.logit_grad = Tensor::zeros(logits.shape);
  for (size_t i = 0; i < logits.size(); ++i)
    r.logit_grad.values[i] = std::exp(logits.values[i] - lse);
  r.logit_grad.values[label] -= 1.0;
  return r;
}

LossResult softmax_cross_entropy_batch(const Tensor& logits, const std::vector<size_t>& labels) {
  if (logits.rank() != 2 || logits.shape[0] != labels.size()) {
    throw std::invalid_argument("softmax_cross_entropy_batch: logits " + shape_str(logits.shape) +
                                " vs " + std::to_string(labels.size()) + " labels");
  }
  size_t n = logits.shape[0], c = logits.shape[1];
  LossResult r;
  r.loss = 0.0;
  r.logit_grad = Tensor::zeros(logits.shape);
  const double invn = 1.0 / static_cast<double>(n);
  for (size_t s = 0; s < n; ++s) {
    Tensor row({c}, std::vector<double>(logits.values.begin() + s * c,
                                        logits.values.begin() + (s + 1) * c));
    LossResult one = softmax_cross_entropy(row, labels[s]);
    r.loss += one.loss;
    for (size_t i = 0; i < c; ++i) r.logit_grad.values[s * c + i] = one.logit_grad.values[i] * invn;
  }
  r.loss *= invn;
  return r;
}

AdamState AdamState::for_param(size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(std::vector<double>& param, const std::vector<double>& grad, AdamState& state) {
  if (param.size() != grad.size() || param.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: size mismatch (param " + std::to_string(param.size()) +
                                ", grad " + std::to_string(grad.size()) + ", state " +
                                std::to_string(state.m.size()) + ")");
  }
  state.t += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (size_t i = 0; i < param.size(); ++i) {
    double g = grad[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    double mhat = state.m[i] / c1;
    double vhat = state.v[i] / c2;
    param[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (eps <= 0.0) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  Tensor g = Tensor::zeros(x.shape);
  Tensor probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    double orig = probe.values[i];
    probe.values[i] = orig + eps;
    double fp = f(probe);
    probe.values[i] = orig - eps;
    double fm = f(probe);
    probe.values[i] = orig;
    g.values[i] = (fp - fm) / (2.0 * eps);
  }
  return g;
}

}  // namespace sflsim
