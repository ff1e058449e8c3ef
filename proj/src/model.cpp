#include "tass/model.hpp"

#include <cmath>

namespace tass {

void ModelConfig::validate() const {
  if (d == 0 || h == 0 || w == 0 || t == 0)
    throw ConfigError("model dimensions must be positive");
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  if (n_heads == 0 || d % n_heads != 0)
    throw ConfigError(detail::msg("n_heads ", n_heads, " must divide d ", d));
  if (tau < 0) throw ConfigError("tau must be >= 0");
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
}

HeadParams HeadParams::init(std::size_t d, std::size_t vocab, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(d));
  HeadParams p;
  p.w = Tensor::uniform({d, vocab}, rng, -bound, bound).set_requires_grad(true);
  p.b = Tensor::uniform({1, vocab}, rng, -bound, bound).set_requires_grad(true);
  return p;
}

std::vector<ParamRef> HeadParams::parameters(const std::string& prefix) const {
  return {{prefix + ".w", w}, {prefix + ".b", b}};
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng = Rng(seed).child(0x1A17);
  ModelParams p;
  p.tsg = TsgParams::init(cfg.d, cfg.tau, rng);
  p.jtg = JtgParams::init(cfg.d, cfg.n_heads, cfg.dual_stream, rng);
  p.head = HeadParams::init(cfg.d, cfg.vocab_size, rng);
  return p;
}

std::vector<ParamRef> ModelParams::parameters() const {
  std::vector<ParamRef> out;
  auto tsg_params = tsg.parameters();
  out.insert(out.end(), tsg_params.begin(), tsg_params.end());
  auto jtg_params = jtg.parameters();
  out.insert(out.end(), jtg_params.begin(), jtg_params.end());
  auto head_params = head.parameters();
  out.insert(out.end(), head_params.begin(), head_params.end());
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.size();
  return n;
}

void ModelParams::clear_grads() const {
  for (auto& p : parameters()) {
    Tensor t = p.tensor;
    t.clear_grad();
  }
}

Tensor answer_logits(Tape& tape, const Tensor& fused, const Tensor& question,
                     const HeadParams& head) {
  Tensor e = mul(tape, fused, question);
  return add(tape, matmul(tape, e, head.w), head.b);
}

SampleForward forward_sample(Tape& tape, const ModelParams& params,
                             const ModelConfig& cfg, const SampleInput& sample) {
  if (sample.audio.shape() != Shape{cfg.t, cfg.d})
    throw DimensionError(detail::msg("sample audio ",
                                     shape_str(sample.audio.shape()),
                                     " does not match config T x d = ", cfg.t,
                                     " x ", cfg.d));
  if (sample.segments.size() != cfg.t)
    throw DimensionError(detail::msg("sample has ", sample.segments.size(),
                                     " segments, config expects ", cfg.t));
  const Tensor& target = sample.target.defined() ? sample.target : sample.question;

  SampleForward out;
  out.grounding.reserve(cfg.t);
  std::vector<Tensor> visual_rows;
  visual_rows.reserve(cfg.t);
  for (std::size_t t = 0; t < cfg.t; ++t) {
    Tensor audio_row = select_row(tape, sample.audio, t);
    GroundingOutput g =
        target_aware_visual(tape, sample.segments[t], audio_row, target,
                            params.tsg, !cfg.no_target_aware);
    visual_rows.push_back(g.feature);
    out.grounding.push_back(std::move(g));

    if (!cfg.no_match_loss) {
      SegmentFeature seg;
      seg.video_id = sample.video_id;
      seg.segment = t;
      seg.audio = audio_row;  // raw input feature of the same segment
      seg.visual = visual_rows.back();
      out.match_segments.push_back(std::move(seg));
    }
  }

  Tensor visual_seq = stack_rows(tape, visual_rows);
  auto diag = question_aware_weights(tape, sample.question, sample.audio,
                                     visual_seq);
  out.diag_audio_weights = diag.first;
  out.diag_visual_weights = diag.second;

  Tensor enc_v = temporal_encode(tape, visual_seq, params.jtg.lstm_visual);
  Tensor enc_a = temporal_encode(tape, sample.audio, params.jtg.lstm_audio);

  if (cfg.dual_stream) {
    out.attention =
        dual_stream_attention(tape, sample.question, enc_v, enc_a, params.jtg);
  } else {
    Tensor stream = interleave(tape, enc_v, enc_a, cfg.order);
    out.attention = question_guided_attention(
        tape, sample.question, stream, params.jtg.mha, params.jtg.residual,
        cfg.order);
  }

  out.logits = answer_logits(tape, out.attention.fused, sample.question,
                             params.head);
  if (cfg.vocab_size != out.logits.shape()[1])
    throw ConfigError(detail::msg("answer head emits ", out.logits.shape()[1],
                                  " classes, vocabulary has ", cfg.vocab_size));
  out.qa_loss = cross_entropy(tape, out.logits, {sample.answer});
  if (!cfg.no_cms)
    out.cms = cms_loss(tape, out.attention.audio_weights,
                       out.attention.visual_weights);
  return out;
}

BatchLoss batch_forward(Tape& tape, const ModelParams& params,
                        const ModelConfig& cfg,
                        std::span<const SampleInput> batch, Rng& match_rng,
                        std::vector<SampleForward>* keep) {
  if (batch.empty()) throw ContractError("batch_forward: empty batch");

  Tensor qa_sum, cms_sum;
  std::vector<SegmentFeature> match_segments;
  for (const SampleInput& sample : batch) {
    SampleForward fwd = forward_sample(tape, params, cfg, sample);
    qa_sum = qa_sum.defined() ? add(tape, qa_sum, fwd.qa_loss) : fwd.qa_loss;
    if (!cfg.no_cms)
      cms_sum = cms_sum.defined() ? add(tape, cms_sum, fwd.cms) : fwd.cms;
    if (!cfg.no_match_loss)
      match_segments.insert(match_segments.end(), fwd.match_segments.begin(),
                            fwd.match_segments.end());
    if (keep) keep->push_back(std::move(fwd));
  }

  const double inv = 1.0 / static_cast<double>(batch.size());
  BatchLoss loss;
  Tensor total = scalar_scale(tape, qa_sum, inv);
  loss.qa = total.item();

  if (!cfg.no_cms) {
    Tensor cms_mean = scalar_scale(tape, cms_sum, inv);
    loss.cms = cms_mean.item();
    total = add(tape, total, cms_mean);
  }
  if (!cfg.no_match_loss) {
    MatchLossResult match = match_loss(tape, params.tsg, match_segments,
                                       match_rng);
    loss.match = match.loss.item();
    loss.degenerate_match = match.degenerate_batch;
    total = add(tape, total, scalar_scale(tape, match.loss, cfg.lambda));
  }
  loss.total = total;
  return loss;
}

}  // namespace tass
