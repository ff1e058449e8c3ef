#include "tass/tsg.hpp"

#include <cmath>
#include <cstdio>

namespace tass {

TsgParams TsgParams::init(std::size_t d, double tau, Rng& rng) {
  if (tau < 0) throw ConfigError("tau must be >= 0");
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(shape, rng, -bound, bound).set_requires_grad(true);
  };
  TsgParams p;
  p.tau = tau;
  p.fuse_w = uniform({2 * d, d}, 2 * d);
  p.fuse_b = uniform({1, d}, 2 * d);
  p.match_w1 = uniform({2 * d, d}, 2 * d);
  p.match_b1 = uniform({1, d}, 2 * d);
  p.match_w2 = uniform({d, 2}, d);
  p.match_b2 = uniform({1, 2}, d);
  return p;
}

std::vector<ParamRef> TsgParams::parameters(const std::string& prefix) const {
  return {{prefix + ".fuse_w", fuse_w},     {prefix + ".fuse_b", fuse_b},
          {prefix + ".match_w1", match_w1}, {prefix + ".match_b1", match_b1},
          {prefix + ".match_w2", match_w2}, {prefix + ".match_b2", match_b2}};
}

Tensor region_attention(Tape& tape, const Tensor& probe, const Tensor& regions) {
  if (probe.rank() != 2 || probe.shape()[0] != 1)
    throw DimensionError(detail::msg("region_attention: probe must be 1 x d, got ",
                                     shape_str(probe.shape())));
  if (regions.rank() != 2 || regions.shape()[1] != probe.shape()[1])
    throw DimensionError(detail::msg("region_attention: regions ",
                                     shape_str(regions.shape()),
                                     " incompatible with probe ",
                                     shape_str(probe.shape())));
  Tensor logits = matmul(tape, probe, transpose(tape, regions));  // 1 x hw
  return softmax_lastdim(tape, logits);
}

Tensor threshold_gate(Tape& tape, const Tensor& weights, double tau) {
  // constant keep-mask; multiplying by it passes gradient through the
  // retained entries and blocks the rest
  std::vector<double> mask(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i)
    mask[i] = weights.values()[i] >= tau ? 1.0 : 0.0;
  return mul(tape, weights, Tensor::from_data(weights.shape(), std::move(mask)));
}

GroundingOutput target_aware_visual(Tape& tape, const Tensor& regions,
                                    const Tensor& audio, const Tensor& target,
                                    const TsgParams& params, bool target_aware) {
  GroundingOutput out;
  out.audio_map = region_attention(tape, audio, regions);

  if (target_aware) {
    out.target_map = region_attention(tape, target, regions);
    out.gated_map = threshold_gate(tape, out.target_map, params.tau);
    out.final_weights =
        softmax_lastdim(tape, add(tape, out.audio_map, out.gated_map));
  } else {
    // ablation path: plain audio-driven grounding
    out.final_weights = out.audio_map;
  }

  out.attended = matmul(tape, out.final_weights, regions);  // 1 x d
  const std::size_t d = regions.shape()[1];
  out.global_feature = reshape(tape, mean_axis(tape, regions, 0), {1, d});
  Tensor fused =
      tanh(tape, concat_lastdim(tape, out.global_feature, out.attended));
  out.feature =
      add(tape, matmul(tape, fused, params.fuse_w), params.fuse_b);
  return out;
}

Tensor match_head_logits(Tape& tape, const TsgParams& params,
                         const Tensor& audio, const Tensor& visual) {
  Tensor pair = concat_lastdim(tape, audio, visual);
  Tensor hidden =
      tanh(tape, add(tape, matmul(tape, pair, params.match_w1), params.match_b1));
  return add(tape, matmul(tape, hidden, params.match_w2), params.match_b2);
}

MatchLossResult match_loss(Tape& tape, const TsgParams& params,
                           std::span<const SegmentFeature> segments, Rng& rng) {
  if (segments.empty()) throw ContractError("match_loss: empty batch");

  bool multi_video = false;
  for (const auto& s : segments)
    if (s.video_id != segments.front().video_id) multi_video = true;

  MatchLossResult result;
  result.degenerate_batch = !multi_video && segments.size() > 1;
  if (result.degenerate_batch)
    std::fprintf(stderr,
                 "warning: match_loss batch holds a single video; negatives "
                 "drawn from other segments of the same video\n");

  std::vector<Tensor> logit_rows;
  std::vector<std::size_t> labels;
  logit_rows.reserve(segments.size());
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const auto& seg = segments[i];
    bool negative = segments.size() > 1 && rng.bernoulli(0.5);
    Tensor visual = seg.visual;
    if (negative) {
      // partner from a different video (different segment as fallback)
      std::size_t j = i;
      for (int attempt = 0; attempt < 1024 && j == i; ++attempt) {
        std::size_t cand = rng.index(segments.size());
        if (multi_video ? segments[cand].video_id != seg.video_id
                        : cand != i)
          j = cand;
      }
      if (j == i) {
        negative = false;  // could not find a partner, keep the true pair
      } else {
        visual = segments[j].visual;
      }
    }
    logit_rows.push_back(match_head_logits(tape, params, seg.audio, visual));
    labels.push_back(negative ? 0 : 1);
    if (negative)
      ++result.negatives;
    else
      ++result.positives;
  }

  Tensor logits = stack_rows(tape, logit_rows);
  result.loss = cross_entropy(tape, logits, labels);
  return result;
}

}  // namespace tass
