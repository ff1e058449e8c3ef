#include "tass/jtg.hpp"

#include <cmath>

namespace tass {

namespace {

Tensor uniform_param(Shape shape, std::size_t fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return Tensor::uniform(shape, rng, -bound, bound).set_requires_grad(true);
}

}  // namespace

LstmParams LstmParams::init(std::size_t d, Rng& rng) {
  LstmParams p;
  p.wx = uniform_param({d, 4 * d}, d, rng);
  p.wh = uniform_param({d, 4 * d}, d, rng);
  p.b = uniform_param({1, 4 * d}, d, rng);
  return p;
}

std::vector<ParamRef> LstmParams::parameters(const std::string& prefix) const {
  return {{prefix + ".wx", wx}, {prefix + ".wh", wh}, {prefix + ".b", b}};
}

MhaParams MhaParams::init(std::size_t d, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || d % n_heads != 0)
    throw ConfigError(detail::msg("n_heads ", n_heads, " must divide d ", d));
  MhaParams p;
  p.n_heads = n_heads;
  p.wq = uniform_param({d, d}, d, rng);
  p.wk = uniform_param({d, d}, d, rng);
  p.wv = uniform_param({d, d}, d, rng);
  p.wo = uniform_param({d, d}, d, rng);
  return p;
}

std::vector<ParamRef> MhaParams::parameters(const std::string& prefix) const {
  return {{prefix + ".wq", wq},
          {prefix + ".wk", wk},
          {prefix + ".wv", wv},
          {prefix + ".wo", wo}};
}

MlpParams MlpParams::init(std::size_t d, Rng& rng) {
  MlpParams p;
  p.w1 = uniform_param({d, d}, d, rng);
  p.b1 = uniform_param({1, d}, d, rng);
  p.w2 = uniform_param({d, d}, d, rng);
  p.b2 = uniform_param({1, d}, d, rng);
  return p;
}

std::vector<ParamRef> MlpParams::parameters(const std::string& prefix) const {
  return {{prefix + ".w1", w1},
          {prefix + ".b1", b1},
          {prefix + ".w2", w2},
          {prefix + ".b2", b2}};
}

JtgParams JtgParams::init(std::size_t d, std::size_t n_heads, bool dual,
                          Rng& rng) {
  JtgParams p;
  p.lstm_audio = LstmParams::init(d, rng);
  p.lstm_visual = LstmParams::init(d, rng);
  p.dual = dual;
  if (dual) {
    p.mha_audio = MhaParams::init(d, n_heads, rng);
    p.mha_visual = MhaParams::init(d, n_heads, rng);
    p.mlp_audio = MlpParams::init(d, rng);
    p.mlp_visual = MlpParams::init(d, rng);
    p.fuse_w = uniform_param({2 * d, d}, 2 * d, rng);
    p.fuse_b = uniform_param({1, d}, 2 * d, rng);
  } else {
    p.mha = MhaParams::init(d, n_heads, rng);
    p.residual = MlpParams::init(d, rng);
  }
  return p;
}

std::vector<ParamRef> JtgParams::parameters(const std::string& prefix) const {
  std::vector<ParamRef> out;
  auto append = [&](std::vector<ParamRef> more) {
    out.insert(out.end(), more.begin(), more.end());
  };
  append(lstm_audio.parameters(prefix + ".lstm_audio"));
  append(lstm_visual.parameters(prefix + ".lstm_visual"));
  if (dual) {
    append(mha_audio.parameters(prefix + ".mha_audio"));
    append(mha_visual.parameters(prefix + ".mha_visual"));
    append(mlp_audio.parameters(prefix + ".mlp_audio"));
    append(mlp_visual.parameters(prefix + ".mlp_visual"));
    out.push_back({prefix + ".fuse_w", fuse_w});
    out.push_back({prefix + ".fuse_b", fuse_b});
  } else {
    append(mha.parameters(prefix + ".mha"));
    append(residual.parameters(prefix + ".residual"));
  }
  return out;
}

const char* stream_order_name(StreamOrder order) {
  switch (order) {
    case StreamOrder::ILVA: return "ILVA";
    case StreamOrder::ILAV: return "ILAV";
    case StreamOrder::CatVA: return "CatVA";
    case StreamOrder::CatAV: return "CatAV";
  }
  throw ContractError("unknown stream order");
}

StreamOrder stream_order_from_name(const std::string& name) {
  for (StreamOrder o : {StreamOrder::ILVA, StreamOrder::ILAV,
                        StreamOrder::CatVA, StreamOrder::CatAV})
    if (name == stream_order_name(o)) return o;
  throw ConfigError(detail::msg("unknown stream order '", name, "'"));
}

// ---- LSTM ----------------------------------------------------------------

LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state,
                    const LstmParams& params) {
  const std::size_t d = x.shape()[1];
  Tensor z = add(tape,
                 add(tape, matmul(tape, x, params.wx),
                     matmul(tape, state.h, params.wh)),
                 params.b);  // 1 x 4d
  Tensor gi = sigmoid(tape, slice_lastdim(tape, z, 0, d));
  Tensor gf = sigmoid(tape, slice_lastdim(tape, z, d, d));
  Tensor gc = tanh(tape, slice_lastdim(tape, z, 2 * d, d));
  Tensor go = sigmoid(tape, slice_lastdim(tape, z, 3 * d, d));

  LstmState next;
  next.c = add(tape, mul(tape, gf, state.c), mul(tape, gi, gc));
  next.h = mul(tape, go, tanh(tape, next.c));
  return next;
}

Tensor temporal_encode(Tape& tape, const Tensor& seq, const LstmParams& params) {
  if (seq.rank() != 2)
    throw DimensionError(detail::msg("temporal_encode: need T x d, got ",
                                     shape_str(seq.shape())));
  const std::size_t steps = seq.shape()[0], d = seq.shape()[1];
  if (params.wx.shape()[0] != d)
    throw DimensionError(detail::msg("temporal_encode: input dim ", d,
                                     " does not match parameters ",
                                     shape_str(params.wx.shape())));
  LstmState state{Tensor::zeros({1, d}), Tensor::zeros({1, d})};
  std::vector<Tensor> hidden;
  hidden.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    state = lstm_cell(tape, select_row(tape, seq, t), state, params);
    hidden.push_back(state.h);
  }
  return stack_rows(tape, hidden);
}

// ---- stream arrangement -----------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> modality_slots(
    StreamOrder order, std::size_t t) {
  std::vector<std::size_t> visual, audio;
  visual.reserve(t);
  audio.reserve(t);
  switch (order) {
    case StreamOrder::ILVA:
      for (std::size_t i = 0; i < t; ++i) {
        visual.push_back(2 * i);
        audio.push_back(2 * i + 1);
      }
      break;
    case StreamOrder::ILAV:
      for (std::size_t i = 0; i < t; ++i) {
        audio.push_back(2 * i);
        visual.push_back(2 * i + 1);
      }
      break;
    case StreamOrder::CatVA:
      for (std::size_t i = 0; i < t; ++i) {
        visual.push_back(i);
        audio.push_back(t + i);
      }
      break;
    case StreamOrder::CatAV:
      for (std::size_t i = 0; i < t; ++i) {
        audio.push_back(i);
        visual.push_back(t + i);
      }
      break;
  }
  return {visual, audio};
}

Tensor interleave(Tape& tape, const Tensor& visual, const Tensor& audio,
                  StreamOrder order) {
  if (visual.rank() != 2 || audio.rank() != 2 ||
      visual.shape() != audio.shape())
    throw DimensionError(detail::msg("interleave: sequences must share T x d, got ",
                                     shape_str(visual.shape()), " vs ",
                                     shape_str(audio.shape())));
  const std::size_t t = visual.shape()[0];
  auto [vslots, aslots] = modality_slots(order, t);
  // scatter rows of [visual; audio] into their slots
  std::vector<std::size_t> perm(2 * t);
  for (std::size_t i = 0; i < t; ++i) {
    perm[vslots[i]] = i;
    perm[aslots[i]] = t + i;
  }
  return gather_rows(tape, concat_rows(tape, visual, audio), perm);
}

std::pair<Tensor, Tensor> deinterleave(Tape& tape, const Tensor& stream,
                                       StreamOrder order) {
  if (stream.rank() != 2 || stream.shape()[0] % 2 != 0)
    throw DimensionError(detail::msg("deinterleave: need 2T x d, got ",
                                     shape_str(stream.shape())));
  const std::size_t t = stream.shape()[0] / 2;
  auto [vslots, aslots] = modality_slots(order, t);
  return {gather_rows(tape, stream, vslots), gather_rows(tape, stream, aslots)};
}

// ---- attention -----------------------------------------------------------------

MhaOutput mha_attend(Tape& tape, const Tensor& query, const Tensor& keys,
                     const MhaParams& params) {
  const std::size_t d = params.wq.shape()[0];
  if (query.rank() != 2 || query.shape()[0] != 1 || query.shape()[1] != d)
    throw DimensionError(detail::msg("mha_attend: query must be 1 x ", d,
                                     ", got ", shape_str(query.shape())));
  if (keys.rank() != 2 || keys.shape()[1] != d)
    throw DimensionError(detail::msg("mha_attend: keys must be S x ", d,
                                     ", got ", shape_str(keys.shape())));
  if (params.n_heads == 0 || d % params.n_heads != 0)
    throw ConfigError(detail::msg("n_heads ", params.n_heads,
                                  " must divide d ", d));
  const std::size_t heads = params.n_heads, dh = d / heads;

  Tensor q = matmul(tape, query, params.wq);  // 1 x d
  Tensor k = matmul(tape, keys, params.wk);   // S x d
  Tensor v = matmul(tape, keys, params.wv);   // S x d

  Tensor context;  // concatenated head outputs
  Tensor weight_sum;
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice_lastdim(tape, q, h * dh, dh);
    Tensor kh = slice_lastdim(tape, k, h * dh, dh);
    Tensor vh = slice_lastdim(tape, v, h * dh, dh);
    Tensor scores = softmax_lastdim(
        tape, scalar_scale(tape, matmul(tape, qh, transpose(tape, kh)),
                           1.0 / std::sqrt(static_cast<double>(dh))));
    Tensor ctx = matmul(tape, scores, vh);  // 1 x dh
    context = h == 0 ? ctx : concat_lastdim(tape, context, ctx);
    weight_sum = h == 0 ? scores : add(tape, weight_sum, scores);
  }

  MhaOutput out;
  out.context = matmul(tape, context, params.wo);
  out.weights = scalar_scale(tape, weight_sum, 1.0 / static_cast<double>(heads));
  return out;
}

namespace {

Tensor renormalize(Tape& tape, const Tensor& w) {
  return div_by_scalar(tape, w, sum_all(tape, w));
}

}  // namespace

Tensor mlp_forward(Tape& tape, const Tensor& x, const MlpParams& p) {
  Tensor hidden = tanh(tape, add(tape, matmul(tape, x, p.w1), p.b1));
  return add(tape, matmul(tape, hidden, p.w2), p.b2);
}

AttentionRecord question_guided_attention(Tape& tape, const Tensor& question,
                                          const Tensor& stream,
                                          const MhaParams& mha,
                                          const MlpParams& residual,
                                          StreamOrder order) {
  if (stream.shape()[0] % 2 != 0)
    throw DimensionError(detail::msg("question_guided_attention: stream must "
                                     "hold 2T rows, got ",
                                     shape_str(stream.shape())));
  const std::size_t t = stream.shape()[0] / 2;
  const std::size_t d = stream.shape()[1];

  MhaOutput att = mha_attend(tape, question, stream, mha);

  AttentionRecord rec;
  rec.combined_weights = att.weights;
  rec.attended = att.context;

  // split by the actual slot layout, then renormalize each half
  auto [vslots, aslots] = modality_slots(order, t);
  rec.visual_weights =
      renormalize(tape, gather_lastdim(tape, att.weights, vslots));
  rec.audio_weights =
      renormalize(tape, gather_lastdim(tape, att.weights, aslots));

  Tensor pooled = reshape(tape, mean_axis(tape, stream, 0), {1, d});
  rec.fused = add(tape, att.context, mlp_forward(tape, pooled, residual));
  return rec;
}

AttentionRecord dual_stream_attention(Tape& tape, const Tensor& question,
                                      const Tensor& visual_seq,
                                      const Tensor& audio_seq,
                                      const JtgParams& params) {
  if (!params.dual)
    throw ContractError("dual_stream_attention on single-stream parameters");
  const std::size_t d = visual_seq.shape()[1];

  MhaOutput att_v = mha_attend(tape, question, visual_seq, params.mha_visual);
  MhaOutput att_a = mha_attend(tape, question, audio_seq, params.mha_audio);

  Tensor pooled_v = reshape(tape, mean_axis(tape, visual_seq, 0), {1, d});
  Tensor pooled_a = reshape(tape, mean_axis(tape, audio_seq, 0), {1, d});
  Tensor f_v_q =
      add(tape, att_v.context, mlp_forward(tape, pooled_v, params.mlp_visual));
  Tensor f_a_q =
      add(tape, att_a.context, mlp_forward(tape, pooled_a, params.mlp_audio));

  AttentionRecord rec;
  rec.visual_weights = att_v.weights;  // each already a distribution over T
  rec.audio_weights = att_a.weights;
  rec.combined_weights = scalar_scale(
      tape, concat_lastdim(tape, att_v.weights, att_a.weights), 0.5);
  Tensor fused = tanh(tape, concat_lastdim(tape, f_v_q, f_a_q));
  rec.attended = add(tape, matmul(tape, fused, params.fuse_w), params.fuse_b);
  rec.fused = rec.attended;
  return rec;
}

Tensor cms_loss(Tape& tape, const Tensor& audio_weights,
                const Tensor& visual_weights) {
  return js_divergence(tape, audio_weights, visual_weights);
}

std::pair<Tensor, Tensor> question_aware_weights(Tape& tape,
                                                 const Tensor& question,
                                                 const Tensor& audio_seq,
                                                 const Tensor& visual_seq) {
  const std::size_t d = question.shape()[1];
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor a = softmax_lastdim(
      tape, scalar_scale(tape,
                         matmul(tape, question, transpose(tape, audio_seq)),
                         scale));
  Tensor v = softmax_lastdim(
      tape, scalar_scale(tape,
                         matmul(tape, question, transpose(tape, visual_seq)),
                         scale));
  return {a, v};
}

}  // namespace tass
