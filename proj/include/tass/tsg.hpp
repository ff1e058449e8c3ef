#ifndef TASS_TSG_HPP
#define TASS_TSG_HPP

#include <span>
#include <string>
#include <vector>

#include "tass/rng.hpp"
#include "tass/tensor.hpp"

namespace tass {

/// Target-aware spatial grounding parameters: the fusion layer combining the
/// global and the attended visual feature, and the audio-visual match head.
struct TsgParams {
  Tensor fuse_w;   // 2d x d
  Tensor fuse_b;   // 1 x d
  Tensor match_w1;  // 2d x d
  Tensor match_b1;  // 1 x d
  Tensor match_w2;  // d x 2
  Tensor match_b2;  // 1 x 2
  double tau = 0.025;

  static TsgParams init(std::size_t d, double tau, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix = "tsg") const;
};

/// Per-segment grounding result. The intermediate attention maps are kept
/// for inspection and testing. When target-aware grounding is disabled the
/// target_map/gated_map slots stay undefined.
struct GroundingOutput {
  Tensor feature;         // f_v^t, 1 x d
  Tensor audio_map;       // s_a, 1 x hw
  Tensor target_map;      // s_q, 1 x hw
  Tensor gated_map;       // s_q after thresholding, 1 x hw
  Tensor final_weights;   // 1 x hw
  Tensor attended;        // weights * regions, 1 x d
  Tensor global_feature;  // mean over regions, 1 x d
};

/// softmax over regions of the probe-region dot products.
Tensor region_attention(Tape& tape, const Tensor& probe, const Tensor& regions);

/// Keeps entries >= tau, zeroes the rest. Gradients flow through retained
/// entries only; the mask itself is not differentiated.
Tensor threshold_gate(Tape& tape, const Tensor& weights, double tau);

/// Full grounding for one segment: region maps from audio and target,
/// threshold gating, softmax of the summed maps, attended + pooled features
/// fused through the FC layer. With target_aware == false the region weights
/// are the audio map alone.
GroundingOutput target_aware_visual(Tape& tape, const Tensor& regions,
                                    const Tensor& audio, const Tensor& target,
                                    const TsgParams& params,
                                    bool target_aware = true);

/// One (audio, grounded visual) pair a match batch is built from.
struct SegmentFeature {
  std::string video_id;
  std::size_t segment = 0;
  Tensor audio;   // 1 x d, plain input feature
  Tensor visual;  // 1 x d, grounded feature (tape-linked)
};

struct MatchLossResult {
  Tensor loss;
  bool degenerate_batch = false;  // negatives fell back to the same video
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Binary audio-visual match loss. Each segment becomes one pair: with
/// probability 1/2 its visual partner is swapped for one from a different
/// video (label 0), otherwise the true pair is kept (label 1). A batch with
/// a single video falls back to in-video negatives and flags the batch.
MatchLossResult match_loss(Tape& tape, const TsgParams& params,
                           std::span<const SegmentFeature> segments, Rng& rng);

/// Match head logits for one pair; exposed for tests.
Tensor match_head_logits(Tape& tape, const TsgParams& params,
                         const Tensor& audio, const Tensor& visual);

}  // namespace tass

#endif  // TASS_TSG_HPP
