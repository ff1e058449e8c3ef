#ifndef TASS_MODEL_HPP
#define TASS_MODEL_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tass/jtg.hpp"
#include "tass/tsg.hpp"

namespace tass {

struct ModelConfig {
  std::size_t d = 64;
  std::size_t h = 7, w = 7;
  std::size_t t = 10;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 0;
  double tau = 0.025;
  double lambda = 0.5;
  bool no_target_aware = false;
  bool no_match_loss = false;
  bool no_cms = false;
  bool dual_stream = false;
  StreamOrder order = StreamOrder::ILVA;

  void validate() const;
};

struct HeadParams {
  Tensor w;  // d x C
  Tensor b;  // 1 x C

  static HeadParams init(std::size_t d, std::size_t vocab, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix = "head") const;
};

struct ModelParams {
  TsgParams tsg;
  JtgParams jtg;
  HeadParams head;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  std::vector<ParamRef> parameters() const;
  std::size_t parameter_count() const;
  void clear_grads() const;
};

/// One question instance ready for the forward pass. Visual segments are
/// pre-reshaped to hw x d region matrices.
struct SampleInput {
  Tensor audio;                  // T x d
  std::vector<Tensor> segments;  // T tensors of hw x d
  Tensor question;               // 1 x d
  Tensor target;                 // 1 x d; falls back to question when undefined
  std::size_t answer = 0;
  std::string video_id;
  std::string question_type;
};

/// f_av^q (+) f_q through the linear answer head.
Tensor answer_logits(Tape& tape, const Tensor& fused, const Tensor& question,
                     const HeadParams& head);

struct SampleForward {
  std::vector<GroundingOutput> grounding;  // per segment
  AttentionRecord attention;
  Tensor logits;   // 1 x C
  Tensor qa_loss;  // scalar
  Tensor cms;      // scalar; undefined when the synchrony loss is disabled
  // question-conditioned weights straight from the grounded sequences;
  // logged for inspection, never part of the objective
  Tensor diag_audio_weights;
  Tensor diag_visual_weights;
  std::vector<SegmentFeature> match_segments;
};

SampleForward forward_sample(Tape& tape, const ModelParams& params,
                             const ModelConfig& cfg, const SampleInput& sample);

struct BatchLoss {
  Tensor total;  // scalar on the tape
  double qa = 0.0;
  double cms = 0.0;
  double match = 0.0;
  bool degenerate_match = false;
};

/// Runs the batch forward and assembles L = L_qa + L_cms + lambda * L_s with
/// the configured terms skipped entirely when disabled. Per-sample outputs
/// are optionally retained for inspection.
BatchLoss batch_forward(Tape& tape, const ModelParams& params,
                        const ModelConfig& cfg,
                        std::span<const SampleInput> batch, Rng& match_rng,
                        std::vector<SampleForward>* keep = nullptr);

}  // namespace tass

#endif  // TASS_MODEL_HPP
