#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "tass/jtg.hpp"

using namespace tass;

namespace {

LstmParams zero_lstm(std::size_t d) {
  LstmParams p;
  p.wx = Tensor::zeros({d, 4 * d});
  p.wh = Tensor::zeros({d, 4 * d});
  p.b = Tensor::zeros({1, 4 * d});
  return p;
}

double sum_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s;
}

std::vector<double> to_vec(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace

TEST_CASE("lstm fixed point at zero") {
  const std::size_t d = 3;
  Tape tape;
  Tensor seq = Tensor::zeros({4, d});
  Tensor hidden = temporal_encode(tape, seq, zero_lstm(d));
  CHECK(hidden.shape() == Shape{4, d});
  for (double v : hidden.values()) CHECK(v == 0.0);
}

TEST_CASE("temporal_encode with one step equals a single cell") {
  const std::size_t d = 4;
  Rng rng(3);
  LstmParams params = LstmParams::init(d, rng);
  Tensor x = Tensor::uniform({1, d}, rng, -1, 1);

  Tape tape;
  Tensor seq_out = temporal_encode(tape, x, params);
  LstmState init{Tensor::zeros({1, d}), Tensor::zeros({1, d})};
  LstmState cell = lstm_cell(tape, x, init, params);
  for (std::size_t i = 0; i < d; ++i)
    CHECK(seq_out.values()[i] == doctest::Approx(cell.h.values()[i]).epsilon(1e-15));
}

TEST_CASE("lstm gradients through three steps") {
  const std::size_t d = 4;
  Rng rng(5);
  LstmParams params = LstmParams::init(d, rng);
  Tensor seq = Tensor::uniform({3, d}, rng, -1, 1);
  Tensor readout = Tensor::uniform({3, d}, rng, -1, 1);

  auto through_seq = [&](Tape& t, const Tensor& x) {
    return sum_all(t, mul(t, temporal_encode(t, x, params), readout));
  };
  CHECK(finite_diff_check(through_seq, seq, 1e-5, 1e-5).pass);

  auto check_param = [&](const Tensor& x, auto swap) {
    auto f = [&](Tape& t, const Tensor& probe) {
      LstmParams p = params;
      swap(p, probe);
      return sum_all(t, mul(t, temporal_encode(t, seq, p), readout));
    };
    FdReport rep = finite_diff_check(f, x, 1e-5, 1e-5);
    CAPTURE(rep.max_rel_err);
    CHECK(rep.pass);
  };
  check_param(params.wx, [](LstmParams& p, const Tensor& x) { p.wx = x; });
  check_param(params.wh, [](LstmParams& p, const Tensor& x) { p.wh = x; });
  check_param(params.b, [](LstmParams& p, const Tensor& x) { p.b = x; });
}

TEST_CASE("interleave layout and round trip") {
  Tape tape;
  Tensor v = Tensor::from_data({2, 2}, {1, 2, 3, 4});    // v1=(1,2) v2=(3,4)
  Tensor a = Tensor::from_data({2, 2}, {5, 6, 7, 8});    // a1=(5,6) a2=(7,8)
  Tensor s = interleave(tape, v, a);
  CHECK(to_vec(s) == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});

  auto [v2, a2] = deinterleave(tape, s);
  CHECK(to_vec(v2) == to_vec(v));
  CHECK(to_vec(a2) == to_vec(a));

  // base case T = 1
  Tensor s1 = interleave(tape, Tensor::from_data({1, 2}, {1, 2}),
                         Tensor::from_data({1, 2}, {5, 6}));
  CHECK(to_vec(s1) == std::vector<double>{1, 2, 5, 6});

  // other arrangements
  Tensor sav = interleave(tape, v, a, StreamOrder::ILAV);
  CHECK(to_vec(sav) == std::vector<double>{5, 6, 1, 2, 7, 8, 3, 4});
  Tensor cva = interleave(tape, v, a, StreamOrder::CatVA);
  CHECK(to_vec(cva) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
  Tensor cav = interleave(tape, v, a, StreamOrder::CatAV);
  CHECK(to_vec(cav) == std::vector<double>{5, 6, 7, 8, 1, 2, 3, 4});
  for (StreamOrder order : {StreamOrder::ILAV, StreamOrder::CatVA, StreamOrder::CatAV}) {
    auto [vv, aa] = deinterleave(tape, interleave(tape, v, a, order), order);
    CHECK(to_vec(vv) == to_vec(v));
    CHECK(to_vec(aa) == to_vec(a));
  }

  CHECK_THROWS_AS(interleave(tape, v, Tensor::zeros({3, 2})), DimensionError);
}

TEST_CASE("identical key rows attract equal attention") {
  const std::size_t d = 4;
  Rng rng(7);
  MhaParams mha = MhaParams::init(d, 2, rng);
  MlpParams mlp = MlpParams::init(d, rng);
  Tensor q = Tensor::uniform({1, d}, rng, -1, 1);
  std::vector<double> row(d);
  for (auto& x : row) x = rng.uniform(-1, 1);
  std::vector<double> both(row);
  both.insert(both.end(), row.begin(), row.end());
  Tensor stream = Tensor::from_data({2, d}, both);

  Tape tape;
  AttentionRecord rec =
      question_guided_attention(tape, q, stream, mha, mlp, StreamOrder::ILVA);
  CHECK(rec.combined_weights.values()[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rec.combined_weights.values()[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("single-head attention matches a hand evaluation") {
  const std::size_t d = 2;
  Rng rng(9);
  MhaParams mha = MhaParams::init(d, 1, rng);
  MlpParams mlp = MlpParams::init(d, rng);
  Tensor q = Tensor::from_data({1, d}, {0.3, -0.7});
  Tensor stream = Tensor::from_data({2, d}, {0.5, 0.2, -0.4, 0.9});

  Tape tape;
  AttentionRecord rec =
      question_guided_attention(tape, q, stream, mha, mlp, StreamOrder::ILVA);

  // raw hand arithmetic, no library calls
  auto matv = [&](const Tensor& m, const std::vector<double>& x) {
    std::vector<double> out(m.shape()[1], 0.0);
    for (std::size_t i = 0; i < m.shape()[0]; ++i)
      for (std::size_t j = 0; j < m.shape()[1]; ++j)
        out[j] += x[i] * m.values()[i * m.shape()[1] + j];
    return out;
  };
  std::vector<double> qp = matv(mha.wq, {0.3, -0.7});
  std::vector<double> k0 = matv(mha.wk, {0.5, 0.2});
  std::vector<double> k1 = matv(mha.wk, {-0.4, 0.9});
  std::vector<double> v0 = matv(mha.wv, {0.5, 0.2});
  std::vector<double> v1 = matv(mha.wv, {-0.4, 0.9});
  double s0 = (qp[0] * k0[0] + qp[1] * k0[1]) / std::sqrt(2.0);
  double s1 = (qp[0] * k1[0] + qp[1] * k1[1]) / std::sqrt(2.0);
  double mx = std::max(s0, s1);
  double e0 = std::exp(s0 - mx), e1 = std::exp(s1 - mx);
  double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
  std::vector<double> ctx = {w0 * v0[0] + w1 * v1[0], w0 * v0[1] + w1 * v1[1]};
  std::vector<double> f_att = matv(mha.wo, ctx);

  CHECK(rec.combined_weights.values()[0] == doctest::Approx(w0).epsilon(1e-12));
  CHECK(rec.combined_weights.values()[1] == doctest::Approx(w1).epsilon(1e-12));
  CHECK(rec.attended.values()[0] == doctest::Approx(f_att[0]).epsilon(1e-12));
  CHECK(rec.attended.values()[1] == doctest::Approx(f_att[1]).epsilon(1e-12));
}

TEST_CASE("weight extraction is layout consistent") {
  const std::size_t d = 6, t = 3;
  Rng rng(11);
  MhaParams mha = MhaParams::init(d, 3, rng);
  MlpParams mlp = MlpParams::init(d, rng);
  Tensor q = Tensor::uniform({1, d}, rng, -1, 1);
  Tensor v = Tensor::uniform({t, d}, rng, -1, 1);
  Tensor a = Tensor::uniform({t, d}, rng, -1, 1);

  std::vector<AttentionRecord> recs;
  for (StreamOrder order : {StreamOrder::ILVA, StreamOrder::ILAV,
                            StreamOrder::CatVA, StreamOrder::CatAV}) {
    Tape tape;
    Tensor stream = interleave(tape, v, a, order);
    recs.push_back(
        question_guided_attention(tape, q, stream, mha, mlp, order));
  }
  for (std::size_t i = 1; i < recs.size(); ++i) {
    for (std::size_t j = 0; j < t; ++j) {
      CHECK(recs[i].visual_weights.values()[j] ==
            doctest::Approx(recs[0].visual_weights.values()[j]).epsilon(1e-12));
      CHECK(recs[i].audio_weights.values()[j] ==
            doctest::Approx(recs[0].audio_weights.values()[j]).epsilon(1e-12));
    }
    for (std::size_t j = 0; j < d; ++j)
      CHECK(recs[i].attended.values()[j] ==
            doctest::Approx(recs[0].attended.values()[j]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights normalize and split masses") {
  const std::size_t d = 8, t = 5;
  Rng rng(13);
  MhaParams mha = MhaParams::init(d, 4, rng);
  MlpParams mlp = MlpParams::init(d, rng);

  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    Tensor q = Tensor::uniform({1, d}, rng, -2, 2);
    Tensor stream = Tensor::uniform({2 * t, d}, rng, -2, 2);
    AttentionRecord rec =
        question_guided_attention(tape, q, stream, mha, mlp, StreamOrder::ILVA);
    CHECK(std::abs(sum_of(rec.combined_weights.values()) - 1.0) < 1e-9);
    CHECK(std::abs(sum_of(rec.visual_weights.values()) - 1.0) < 1e-9);
    CHECK(std::abs(sum_of(rec.audio_weights.values()) - 1.0) < 1e-9);

    // pre-renormalization masses add to one
    auto [vslots, aslots] = modality_slots(StreamOrder::ILVA, t);
    double vm = 0, am = 0;
    for (std::size_t s : vslots) vm += rec.combined_weights.values()[s];
    for (std::size_t s : aslots) am += rec.combined_weights.values()[s];
    CHECK(std::abs(vm + am - 1.0) < 1e-9);
  }
}

TEST_CASE("attention gradients match finite differences") {
  const std::size_t d = 4, t = 2;
  Rng rng(17);
  MhaParams mha = MhaParams::init(d, 2, rng);
  MlpParams mlp = MlpParams::init(d, rng);
  Tensor q = Tensor::uniform({1, d}, rng, -1, 1);
  Tensor stream = Tensor::uniform({2 * t, d}, rng, -1, 1);
  Tensor readout = Tensor::uniform({1, d}, rng, -1, 1);

  // a loss touching the fused feature and both weight paths
  auto run = [&](Tape& tp, const Tensor& qq, const Tensor& ss,
                 const MhaParams& m, const MlpParams& r) {
    AttentionRecord rec =
        question_guided_attention(tp, qq, ss, m, r, StreamOrder::ILVA);
    Tensor out = sum_all(tp, mul(tp, rec.fused, readout));
    return add(tp, out, cms_loss(tp, rec.audio_weights, rec.visual_weights));
  };

  auto check = [&](const Tensor& x, auto rebuild) {
    FdReport rep = finite_diff_check(rebuild, x, 1e-5, 1e-5);
    CAPTURE(rep.max_rel_err);
    CHECK(rep.pass);
  };

  check(q, [&](Tape& tp, const Tensor& x) { return run(tp, x, stream, mha, mlp); });
  check(stream, [&](Tape& tp, const Tensor& x) { return run(tp, q, x, mha, mlp); });
  check(mha.wq, [&](Tape& tp, const Tensor& x) {
    MhaParams m = mha;
    m.wq = x;
    return run(tp, q, stream, m, mlp);
  });
  check(mha.wk, [&](Tape& tp, const Tensor& x) {
    MhaParams m = mha;
    m.wk = x;
    return run(tp, q, stream, m, mlp);
  });
  check(mha.wv, [&](Tape& tp, const Tensor& x) {
    MhaParams m = mha;
    m.wv = x;
    return run(tp, q, stream, m, mlp);
  });
  check(mha.wo, [&](Tape& tp, const Tensor& x) {
    MhaParams m = mha;
    m.wo = x;
    return run(tp, q, stream, m, mlp);
  });
  check(mlp.w1, [&](Tape& tp, const Tensor& x) {
    MlpParams r = mlp;
    r.w1 = x;
    return run(tp, q, stream, mha, r);
  });
  check(mlp.b2, [&](Tape& tp, const Tensor& x) {
    MlpParams r = mlp;
    r.b2 = x;
    return run(tp, q, stream, mha, r);
  });
}

TEST_CASE("head split must divide the feature dimension") {
  Rng rng(19);
  CHECK_THROWS_AS(MhaParams::init(6, 4, rng), ConfigError);
}

TEST_CASE("cms loss values") {
  Tape tape;
  Tensor w = Tensor::from_data({1, 2}, {0.4, 0.6});
  CHECK(cms_loss(tape, w, w).item() == doctest::Approx(0.0).epsilon(1e-12));

  Tensor wa = Tensor::from_data({1, 2}, {1.0, 0.0});
  Tensor wv = Tensor::from_data({1, 2}, {0.5, 0.5});
  CHECK(cms_loss(tape, wa, wv).item() ==
        doctest::Approx(0.2157615543).epsilon(1e-6));
}

TEST_CASE("minimizing cms on free logits drives JS to zero") {
  const std::size_t t = 4;
  Rng rng(23);
  Tensor la = Tensor::uniform({1, t}, rng, -1, 1).set_requires_grad(true);
  Tensor lv = Tensor::uniform({1, t}, rng, -1, 1).set_requires_grad(true);

  double js = 1.0;
  for (int step = 0; step < 200 && js >= 1e-4; ++step) {
    Tape tape;
    Tensor loss = cms_loss(tape, softmax_lastdim(tape, la),
                           softmax_lastdim(tape, lv));
    js = loss.item();
    backward(loss, tape);
    for (Tensor* p : {&la, &lv}) {
      auto g = p->grad();
      auto& vals = p->mutable_values();
      for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= 20.0 * g[i];
      p->clear_grad();
    }
  }
  CHECK(js < 1e-4);
}

TEST_CASE("diagnostic question-aware weights are distributions") {
  const std::size_t d = 8, t = 5;
  Rng rng(29);
  Tape tape;
  Tensor q = Tensor::uniform({1, d}, rng, -1, 1);
  Tensor fa = Tensor::uniform({t, d}, rng, -1, 1);
  Tensor fv = Tensor::uniform({t, d}, rng, -1, 1);
  auto [aq, vq] = question_aware_weights(tape, q, fa, fv);
  CHECK(aq.shape() == Shape{1, t});
  CHECK(std::abs(sum_of(aq.values()) - 1.0) < 1e-9);
  CHECK(std::abs(sum_of(vq.values()) - 1.0) < 1e-9);
}
