#include "sflsim/model.hpp"

#include <sstream>
#include <stdexcept>

namespace sflsim {

SplitSpec SplitSpec::cuts(size_t cut1, size_t cut2, size_t total_layers, bool allow_empty_body) {
  if (cut1 == 0 || cut1 > cut2 || cut2 >= total_layers) {
    std::ostringstream os;
    os << "invalid split: require 0 < cut1 <= cut2 < total_layers, got cut1=" << cut1
       << " cut2=" << cut2 << " total=" << total_layers;
    throw std::invalid_argument(os.str());
  }
  if (cut1 == cut2 && !allow_empty_body) {
    throw std::invalid_argument("invalid split: cut1 == cut2 gives an empty body segment");
  }
  SplitSpec s;
  s.split = true;
  s.cut1 = cut1;
  s.cut2 = cut2;
  return s;
}

std::string segment_role_name(SegmentRole r) {
  switch (r) {
    case SegmentRole::head: return "head";
    case SegmentRole::body: return "body";
    case SegmentRole::tail: return "tail";
    case SegmentRole::full: return "full";
  }
  return "?";
}

void ModelSegment::init_optimizer(double lr) {
  opt.clear();
  grad_buf.clear();
  for (const auto& l : layers) {
    std::vector<AdamState> st;
    std::vector<Tensor> gb;
    for (const auto& p : l.params) {
      st.push_back(AdamState::for_param(p.size(), lr));
      gb.push_back(Tensor::zeros(p.shape));
    }
    opt.push_back(std::move(st));
    grad_buf.push_back(std::move(gb));
  }
}

void ModelSegment::zero_grad() {
  for (auto& per_layer : grad_buf)
    for (auto& g : per_layer) std::fill(g.values.begin(), g.values.end(), 0.0);
}

void ModelSegment::apply_adam() {
  for (size_t li = 0; li < layers.size(); ++li) {
    for (size_t pi = 0; pi < layers[li].params.size(); ++pi) {
      adam_step(layers[li].params[pi].values, grad_buf[li][pi].values, opt[li][pi]);
    }
  }
  zero_grad();
}

size_t ModelSegment::param_count() const {
  size_t n = 0;
  for (const auto& l : layers) n += l.param_count();
  return n;
}

Tensor segment_forward(const ModelSegment& seg, const Tensor& input, SegmentContexts& ctx) {
  ctx.per_layer.clear();
  ctx.per_layer.reserve(seg.layers.size());
  Tensor cur = input;
  for (const auto& layer : seg.layers) {
    auto [out, lctx] = forward(layer, cur);
    ctx.per_layer.push_back(std::move(lctx));
    cur = std::move(out);
  }
  assert_finite(cur, segment_role_name(seg.role) + " segment forward output");
  return cur;
}

Tensor segment_backward(ModelSegment& seg, const SegmentContexts& ctx, const Tensor& upstream) {
  if (ctx.per_layer.size() != seg.layers.size()) {
    throw std::invalid_argument("segment_backward: context does not match segment layout");
  }
  Tensor grad = upstream;
  for (size_t i = seg.layers.size(); i-- > 0;) {
    BackwardResult br = backward(seg.layers[i], ctx.per_layer[i], grad);
    for (size_t pi = 0; pi < br.param_grads.size(); ++pi) {
      auto& buf = seg.grad_buf[i][pi].values;
      const auto& g = br.param_grads[pi].values;
      for (size_t k = 0; k < buf.size(); ++k) buf[k] += g[k];
    }
    grad = std::move(br.input_grad);
  }
  assert_finite(grad, segment_role_name(seg.role) + " segment input grad");
  return grad;
}

size_t flop_count(const ModelSegment& seg, const std::vector<size_t>& sample_shape) {
  size_t total = 0;
  std::vector<size_t> shape = sample_shape;
  for (const auto& layer : seg.layers) {
    total += layer_flops(layer, shape);
    shape = output_shape(layer, shape);
  }
  return total;
}

std::vector<size_t> segment_output_shape(const ModelSegment& seg,
                                         const std::vector<size_t>& input_shape) {
  std::vector<size_t> shape = input_shape;
  for (const auto& layer : seg.layers) shape = output_shape(layer, shape);
  return shape;
}

std::vector<double> flat_params(const ModelSegment& seg) {
  std::vector<double> flat;
  for (const auto& l : seg.layers)
    for (const auto& p : l.params) flat.insert(flat.end(), p.values.begin(), p.values.end());
  return flat;
}

void set_flat_params(ModelSegment& seg, const std::vector<double>& flat) {
  size_t off = 0;
  for (auto& l : seg.layers) {
    for (auto& p : l.params) {
      if (off + p.size() > flat.size()) {
        throw std::invalid_argument("set_flat_params: flat vector too short");
      }
      std::copy(flat.begin() + off, flat.begin() + off + p.size(), p.values.begin());
      off += p.size();
    }
  }
  if (off != flat.size()) {
    throw std::invalid_argument("set_flat_params: flat vector length mismatch");
  }
}

uint64_t param_hash(const std::vector<Layer>& layers) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : layers)
    for (const auto& p : l.params)
      h = fnv1a(p.values.data(), p.values.size() * sizeof(double), h);
  return h;
}

uint64_t param_hash(const ModelSegment& seg) { return param_hash(seg.layers); }

ArchPreset arch_preset_from_name(const std::string& name) {
  if (name == "tinycnn") return ArchPreset::tinycnn;
  if (name == "mlp") return ArchPreset::mlp;
  throw std::invalid_argument("unknown architecture preset: " + name);
}

std::string arch_preset_name(ArchPreset p) {
  return p == ArchPreset::tinycnn ? "tinycnn" : "mlp";
}

ModelBuild build_model(const ArchConfig& arch, uint64_t seed) {
  ModelBuild mb;
  // one init stream per layer index, so identical layers get identical weights
  // regardless of how many draws earlier layers consume
  auto rng_at = [&](size_t idx) {
    StreamId id(seed);
    id.add("init").add("layer").add(idx);
    return id.rng();
  };

  switch (arch.preset) {
    case ArchPreset::tinycnn: {
      if (arch.input_shape.size() != 3) {
        throw std::invalid_argument("tinycnn expects input shape [C,H,W]");
      }
      size_t c = arch.input_shape[0], h = arch.input_shape[1], w = arch.input_shape[2];
      // conv(k2,s2) + avgpool(2,2) quarter the spatial extents
      size_t h1 = (h - 2) / 2 + 1, w1 = (w - 2) / 2 + 1;
      size_t h2 = (h1 - 2) / 2 + 1, w2 = (w1 - 2) / 2 + 1;
      size_t d = 24 * h2 * w2;
      if (d % 24 != 0) {
        throw std::invalid_argument("tinycnn configuration: feature dim " + std::to_string(d) +
                                    " not divisible by 24");
      }
      size_t hidden = 64;
      std::vector<Layer> L;
      {
        Rng r = rng_at(0);
        L.push_back(make_conv2d(c, 24, 2, 2, r));
      }
      L.push_back(make_relu());
      L.push_back(make_avgpool(2, 2));
      L.push_back(make_flatten(3));
      {
        Rng r = rng_at(4);
        L.push_back(make_dense(d, hidden, r));
      }
      L.push_back(make_relu());
      {
        Rng r = rng_at(6);
        L.push_back(make_dense(hidden, hidden, r));
      }
      L.push_back(make_relu());
      {
        Rng r = rng_at(8);
        L.push_back(make_dense(hidden, arch.num_classes, r));
      }
      mb.layers = std::move(L);
      mb.default_spec = SplitSpec::cuts(4, 8, mb.layers.size());
      mb.feature_dim = d;
      break;
    }
    case ArchPreset::mlp: {
      if (arch.input_shape.size() != 1) {
        throw std::invalid_argument("mlp expects input shape [D]");
      }
      size_t in = arch.input_shape[0];
      size_t d = 24;
      std::vector<Layer> L;
      {
        Rng r = rng_at(0);
        L.push_back(make_dense(in, d, r));
      }
      L.push_back(make_relu());
      {
        Rng r = rng_at(2);
        L.push_back(make_dense(d, d, r));
      }
      L.push_back(make_relu());
      {
        Rng r = rng_at(4);
        L.push_back(make_dense(d, arch.num_classes, r));
      }
      mb.layers = std::move(L);
      mb.default_spec = SplitSpec::cuts(2, 4, mb.layers.size());
      mb.feature_dim = d;
      break;
    }
  }
  return mb;
}

Partition partition(const std::vector<Layer>& model, const SplitSpec& spec, double lr) {
  if (!spec.split) {
    throw std::invalid_argument("partition: spec is the no-split variant");
  }
  if (spec.cut2 >= model.size() || spec.cut1 > spec.cut2 || spec.cut1 == 0) {
    std::ostringstream os;
    os << "partition: cuts (" << spec.cut1 << "," << spec.cut2 << ") invalid for "
       << model.size() << " layers";
    throw std::invalid_argument(os.str());
  }
  Partition p;
  p.head.role = SegmentRole::head;
  p.body.role = SegmentRole::body;
  p.tail.role = SegmentRole::tail;
  p.head.layers.assign(model.begin(), model.begin() + spec.cut1);
  p.body.layers.assign(model.begin() + spec.cut1, model.begin() + spec.cut2);
  p.tail.layers.assign(model.begin() + spec.cut2, model.end());
  p.head.init_optimizer(lr);
  p.body.init_optimizer(lr);
  p.tail.init_optimizer(lr);
  return p;
}

ModelSegment full_segment(const std::vector<Layer>& model, double lr) {
  ModelSegment seg;
  seg.role = SegmentRole::full;
  seg.layers = model;
  seg.init_optimizer(lr);
  return seg;
}

}  // namespace sflsim
