#ifndef TASS_JTG_HPP
#define TASS_JTG_HPP

#include <string>
#include <utility>
#include <vector>

#include "tass/rng.hpp"
#include "tass/tensor.hpp"

namespace tass {

/// Single-layer LSTM, input size d, hidden size d, zero initial state.
struct LstmParams {
  Tensor wx;  // d x 4d, gate order [input, forget, cell, output]
  Tensor wh;  // d x 4d
  Tensor b;   // 1 x 4d

  static LstmParams init(std::size_t d, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix) const;
};

struct MhaParams {
  Tensor wq, wk, wv, wo;  // each d x d
  std::size_t n_heads = 1;

  static MhaParams init(std::size_t d, std::size_t n_heads, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix) const;
};

/// d -> d MLP with one hidden tanh layer, used for the residual branch.
struct MlpParams {
  Tensor w1, b1, w2, b2;

  static MlpParams init(std::size_t d, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix) const;
};

/// How the two modality sequences are arranged into one stream.
enum class StreamOrder { ILVA, ILAV, CatVA, CatAV };

const char* stream_order_name(StreamOrder order);
StreamOrder stream_order_from_name(const std::string& name);

/// Temporal grounding parameters. The single-stream path uses one attention
/// block over the interleaved sequence; the dual-stream comparison keeps one
/// attention block per modality plus a late fusion layer.
struct JtgParams {
  LstmParams lstm_audio, lstm_visual;
  MhaParams mha;
  MlpParams residual;

  bool dual = false;
  MhaParams mha_audio, mha_visual;
  MlpParams mlp_audio, mlp_visual;
  Tensor fuse_w;  // 2d x d
  Tensor fuse_b;  // 1 x d

  static JtgParams init(std::size_t d, std::size_t n_heads, bool dual, Rng& rng);
  std::vector<ParamRef> parameters(const std::string& prefix = "jtg") const;
};

struct LstmState {
  Tensor h;  // 1 x d
  Tensor c;  // 1 x d
};

/// One LSTM cell application; exposed for tests.
LstmState lstm_cell(Tape& tape, const Tensor& x, const LstmState& state,
                    const LstmParams& params);

/// Hidden states for every step of the sequence (T x d in, T x d out).
Tensor temporal_encode(Tape& tape, const Tensor& seq, const LstmParams& params);

/// Segment interleave [v1, a1, ..., vT, aT] (order ILVA); the other
/// arrangements are available for the ablations.
Tensor interleave(Tape& tape, const Tensor& visual, const Tensor& audio,
                  StreamOrder order = StreamOrder::ILVA);
std::pair<Tensor, Tensor> deinterleave(Tape& tape, const Tensor& stream,
                                       StreamOrder order = StreamOrder::ILVA);

/// Slot indices of each modality for a given arrangement: (visual, audio).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> modality_slots(
    StreamOrder order, std::size_t t);

/// Question-guided attention output over the interleaved stream.
struct AttentionRecord {
  Tensor combined_weights;  // w^av over the 2T slots, head-averaged
  Tensor visual_weights;    // w_v, renormalized to sum 1
  Tensor audio_weights;     // w_a, renormalized to sum 1
  Tensor attended;          // f_att, 1 x d
  Tensor fused;             // f_att + MLP(mean of the stream rows), 1 x d
};

/// Multi-head attention of a single query row over `keys` rows, plus the
/// head-averaged attention distribution. Building block for both the single-
/// and dual-stream paths.
struct MhaOutput {
  Tensor context;  // 1 x d, output-projected
  Tensor weights;  // 1 x S, mean over heads
};
MhaOutput mha_attend(Tape& tape, const Tensor& query, const Tensor& keys,
                     const MhaParams& params);

AttentionRecord question_guided_attention(Tape& tape, const Tensor& question,
                                          const Tensor& stream,
                                          const MhaParams& mha,
                                          const MlpParams& residual,
                                          StreamOrder order);

Tensor mlp_forward(Tape& tape, const Tensor& x, const MlpParams& params);

/// Dual-stream comparison path: separate question attention per modality,
/// late fusion of the two contexts. The per-modality weights feed the
/// synchrony loss directly. combined_weights holds [w_v, w_a] / 2 so that it
/// remains a distribution over 2T slots.
AttentionRecord dual_stream_attention(Tape& tape, const Tensor& question,
                                      const Tensor& visual_seq,
                                      const Tensor& audio_seq,
                                      const JtgParams& params);

/// JS divergence between the two renormalized modality weight vectors.
Tensor cms_loss(Tape& tape, const Tensor& audio_weights,
                const Tensor& visual_weights);

/// Question-conditioned per-modality weights computed directly from the
/// encoded sequences with 1/sqrt(d) scaling. Diagnostic only; the trained
/// synchrony loss always consumes the attention-derived weights.
std::pair<Tensor, Tensor> question_aware_weights(Tape& tape,
                                                 const Tensor& question,
                                                 const Tensor& audio_seq,
                                                 const Tensor& visual_seq);

}  // namespace tass

#endif  // TASS_JTG_HPP
