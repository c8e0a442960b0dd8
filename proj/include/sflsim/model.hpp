#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sflsim/layers.hpp"

namespace sflsim {

/// Partition of a layer sequence into head/body/tail. Regimes that train the
/// whole model on one side (fl, centralized, local) use the no-split variant,
/// never sentinel cut indices.
struct SplitSpec {
  bool split = false;
  size_t cut1 = 0;  // exclusive end of head
  size_t cut2 = 0;  // exclusive end of body

  static SplitSpec none() { return {}; }
  static SplitSpec cuts(size_t cut1, size_t cut2, size_t total_layers, bool allow_empty_body = false);
};

enum class SegmentRole { head, body, tail, full };

std::string segment_role_name(SegmentRole r);

/// A run of consecutive layers with its own optimizer state and gradient
/// accumulation buffers. Segments are independently owned by one worker.
struct ModelSegment {
  SegmentRole role = SegmentRole::full;
  std::vector<Layer> layers;
  std::vector<std::vector<AdamState>> opt;        // [layer][param]
  std::vector<std::vector<Tensor>> grad_buf;      // [layer][param], accumulated

  void init_optimizer(double lr);
  void zero_grad();
  /// Applies one Adam step per parameter from the accumulated buffers, then clears them.
  void apply_adam();
  size_t param_count() const;
};

struct SegmentContexts {
  std::vector<LayerContext> per_layer;
};

Tensor segment_forward(const ModelSegment& seg, const Tensor& input, SegmentContexts& ctx);

/// Runs backward through all layers, accumulating parameter gradients into
/// seg.grad_buf; returns the gradient w.r.t. the segment input.
Tensor segment_backward(ModelSegment& seg, const SegmentContexts& ctx, const Tensor& upstream);

/// Per-sample forward FLOPs of a segment, by the dense/conv conventions.
size_t flop_count(const ModelSegment& seg, const std::vector<size_t>& sample_shape);

std::vector<size_t> segment_output_shape(const ModelSegment& seg,
                                         const std::vector<size_t>& input_shape);

// ---- parameter plumbing (FedAvg, hashing, checkpoints) ----

std::vector<double> flat_params(const ModelSegment& seg);
void set_flat_params(ModelSegment& seg, const std::vector<double>& flat);
uint64_t param_hash(const ModelSegment& seg);
uint64_t param_hash(const std::vector<Layer>& layers);

// ---- architectures ----

enum class ArchPreset { tinycnn, mlp };

ArchPreset arch_preset_from_name(const std::string& name);
std::string arch_preset_name(ArchPreset p);

struct ArchConfig {
  ArchPreset preset = ArchPreset::tinycnn;
  std::vector<size_t> input_shape{3, 32, 32};
  size_t num_classes = 10;
};

struct ModelBuild {
  std::vector<Layer> layers;
  SplitSpec default_spec;
  size_t feature_dim = 0;  // width at cut1, divisible by 24
};

/// Builds the preset layer stack with deterministic per-layer init streams.
/// Throws a configuration error if the feature dimension at cut1 is not a
/// multiple of 24 (the CR denominators 3, 6, 8, 12 all divide 24).
ModelBuild build_model(const ArchConfig& arch, uint64_t seed);

struct Partition {
  ModelSegment head, body, tail;
};

/// Splits the layer list at the spec's cuts; each segment gets independent
/// optimizer state. Concatenating the segments reproduces the input list.
Partition partition(const std::vector<Layer>& model, const SplitSpec& spec, double lr);

ModelSegment full_segment(const std::vector<Layer>& model, double lr);

}  // namespace sflsim
