#include "tass/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace tass {

namespace {

using nlohmann::json;

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = rng.gaussian();
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void normalize(std::vector<double>& v) {
  double n = std::sqrt(dot(v, v));
  if (n > 0)
    for (auto& x : v) x /= n;
}

/// Noise with expected vector norm `scale` (per-coordinate sigma scale/sqrt(d)).
void add_noise(std::vector<double>& v, double scale, Rng& rng) {
  if (scale == 0.0) return;
  const double sigma = scale / std::sqrt(static_cast<double>(v.size()));
  for (auto& x : v) x += sigma * rng.gaussian();
}

/// Unit vectors with pairwise |cos| below 0.5, by rejection.
std::vector<std::vector<double>> spread_basis(Rng& rng, std::size_t k,
                                              std::size_t d,
                                              std::size_t draw_budget) {
  std::vector<std::vector<double>> out;
  std::size_t draws = 0;
  while (out.size() < k) {
    if (++draws > draw_budget)
      throw SeedError(detail::msg("prototype rejection sampling exhausted ",
                                  draw_budget, " draws; retry with a new seed"));
    auto cand = random_unit(rng, d);
    bool ok = true;
    for (const auto& prev : out)
      if (std::abs(dot(cand, prev)) >= 0.5) {
        ok = false;
        break;
      }
    if (ok) out.push_back(std::move(cand));
  }
  return out;
}

}  // namespace

const char* question_type_name(QuestionType t) {
  switch (t) {
    case QuestionType::existential: return "existential";
    case QuestionType::counting: return "counting";
    case QuestionType::temporal_first: return "temporal_first";
    case QuestionType::location: return "location";
  }
  throw ContractError("unknown question type");
}

QuestionType question_type_from_name(const std::string& name) {
  for (QuestionType t : kAllQuestionTypes)
    if (name == question_type_name(t)) return t;
  throw ConfigError(detail::msg("unknown question type '", name, "'"));
}

void ScenarioSpec::validate() const {
  if (num_prototypes < 2) throw ConfigError("num_prototypes must be >= 2");
  if (d == 0 || h == 0 || w == 0 || t1 == 0)
    throw ConfigError("all scenario dimensions must be positive");
  if (noise_std < 0) throw ConfigError("noise_std must be >= 0");
  if (distractor_rate < 0 || distractor_rate > 1)
    throw ConfigError("distractor_rate must lie in [0, 1]");
  if (question_mix.empty()) throw ConfigError("question_mix is empty");
  double sum = 0;
  for (auto& [t, wgt] : question_mix) {
    if (wgt < 0) throw ConfigError("question_mix weights must be >= 0");
    sum += wgt;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError(detail::msg("question_mix weights sum to ", sum));
  if (sound_prob < 0 || sound_prob > 1)
    throw ConfigError("sound_prob must lie in [0, 1]");
}

Prototypes gen_prototypes(const ScenarioSpec& spec) {
  spec.validate();
  const std::size_t k = spec.num_prototypes, d = spec.d;
  Rng rng = Rng(spec.seed).child(0xBA5E);

  Prototypes p;
  const std::size_t budget = 10 * k * d;
  p.visual = spread_basis(rng, k, d, budget);
  p.audio = spread_basis(rng, k, d, budget);

  // text features live near their visual counterparts (expected offset norm 0.1)
  p.text.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    auto t = p.visual[i];
    add_noise(t, 0.1, rng);
    normalize(t);
    p.text.push_back(std::move(t));
  }

  // position embeddings share one direction per quadrant plus a smaller
  // cell-specific component, so spatial answers ride four stable directions
  std::array<std::vector<double>, 4> quadrant_emb;
  for (auto& q : quadrant_emb) q = random_unit(rng, d);
  p.positions.reserve(spec.h * spec.w);
  for (std::size_t c = 0; c < spec.h * spec.w; ++c) {
    std::size_t r = c / spec.w, col = c % spec.w;
    std::size_t quad = (r * 2 >= spec.h ? 2 : 0) + (col * 2 >= spec.w ? 1 : 0);
    auto cell = random_unit(rng, d);
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i)
      v[i] = quadrant_emb[quad][i] + 0.5 * cell[i];
    normalize(v);
    p.positions.push_back(std::move(v));
  }
  p.sound_cue = random_unit(rng, d);
  p.any_object = random_unit(rng, d);
  for (auto& e : p.type_embeddings) e = random_unit(rng, d);
  return p;
}

// ---- scripts -------------------------------------------------------------------

bool SceneScript::proto_present(std::size_t proto) const {
  for (const auto& o : objects)
    if (o.proto == proto) return true;
  return false;
}

bool SceneScript::proto_sounds(std::size_t proto) const {
  for (const auto& o : objects)
    if (o.proto == proto && o.sounds) return true;
  return false;
}

std::vector<std::size_t> SceneScript::sounding_protos_at(std::size_t t) const {
  std::vector<std::size_t> out;
  for (const auto& o : objects)
    if (o.sounds && o.onset <= t) out.push_back(o.proto);
  return out;
}

std::vector<std::size_t> SceneScript::sounding_protos() const {
  std::vector<std::size_t> out;
  for (const auto& o : objects)
    if (o.sounds) out.push_back(o.proto);
  std::sort(out.begin(), out.end());
  return out;
}

SceneScript gen_script(const ScenarioSpec& spec, Rng& rng,
                       std::string video_id) {
  SceneScript script;
  script.video_id = std::move(video_id);
  script.t1 = spec.t1;
  script.h = spec.h;
  script.w = spec.w;

  // at most one object per quadrant: occupied-quadrant count doubles as the
  // spatial signature of the scene
  const std::size_t k = spec.num_prototypes;
  std::size_t n_objects = 2;
  for (std::size_t i = 2; i < std::min<std::size_t>(k, 4); ++i)
    if (rng.bernoulli(spec.distractor_rate)) ++n_objects;
  n_objects = std::min<std::size_t>(n_objects, 4);

  std::vector<std::size_t> protos(k);
  for (std::size_t i = 0; i < k; ++i) protos[i] = i;
  rng.shuffle(protos);
  protos.resize(n_objects);

  std::vector<std::size_t> quadrants{0, 1, 2, 3};
  rng.shuffle(quadrants);
  auto place_in_quadrant = [&](std::size_t quad) -> std::size_t {
    std::vector<std::size_t> cells;
    for (std::size_t r = 0; r < spec.h; ++r)
      for (std::size_t c = 0; c < spec.w; ++c) {
        std::size_t q = (r * 2 >= spec.h ? 2 : 0) + (c * 2 >= spec.w ? 1 : 0);
        if (q == quad) cells.push_back(r * spec.w + c);
      }
    if (cells.empty()) throw SeedError("grid too small for quadrant placement");
    return cells[rng.index(cells.size())];
  };

  for (std::size_t i = 0; i < protos.size(); ++i) {
    SceneObject obj;
    obj.proto = protos[i];
    obj.cell = place_in_quadrant(quadrants[i]);
    obj.sounds = rng.bernoulli(spec.sound_prob);
    script.objects.push_back(obj);
  }
  // at least one object must sound
  bool any = false;
  for (const auto& o : script.objects) any = any || o.sounds;
  if (!any) script.objects[0].sounds = true;

  // the first sounder starts at segment 0; later onsets are distinct with a
  // gap of at least two segments, keeping "which sounded first" unambiguous
  std::vector<std::size_t> sounding_idx;
  for (std::size_t i = 0; i < script.objects.size(); ++i)
    if (script.objects[i].sounds) sounding_idx.push_back(i);
  rng.shuffle(sounding_idx);
  std::size_t late_span = spec.t1 > 2 ? spec.t1 - 2 : 1;
  std::vector<std::size_t> late_pool(late_span);
  for (std::size_t i = 0; i < late_span; ++i)
    late_pool[i] = std::min(2 + i, spec.t1 - 1);
  rng.shuffle(late_pool);
  for (std::size_t i = 0; i < sounding_idx.size(); ++i)
    script.objects[sounding_idx[i]].onset =
        i == 0 ? 0 : late_pool[(i - 1) % late_pool.size()];
  return script;
}

VideoFeatures render_video(const ScenarioSpec& spec, const Prototypes& protos,
                           const SceneScript& script, Rng& rng) {
  const std::size_t d = spec.d, hw = spec.h * spec.w;
  std::vector<double> audio(spec.t1 * d, 0.0);
  std::vector<double> visual(spec.t1 * hw * d, 0.0);

  for (std::size_t t = 0; t < spec.t1; ++t) {
    auto sounding = script.sounding_protos_at(t);
    std::vector<double> a(d, 0.0);
    if (!sounding.empty()) {
      for (std::size_t pidx : sounding)
        for (std::size_t i = 0; i < d; ++i) a[i] += protos.audio[pidx][i];
      for (auto& x : a) x /= static_cast<double>(sounding.size());
    }
    add_noise(a, spec.noise_std, rng);
    std::copy(a.begin(), a.end(), audio.begin() + t * d);

    for (std::size_t cell = 0; cell < hw; ++cell) {
      std::vector<double> v(d, 0.0);
      const SceneObject* occupant = nullptr;
      for (const auto& o : script.objects)
        if (o.cell == cell) occupant = &o;
      if (occupant) {
        const bool sounding_now = occupant->sounds && occupant->onset <= t;
        for (std::size_t i = 0; i < d; ++i) {
          v[i] = spec.visual_gain * protos.visual[occupant->proto][i] +
                 spec.position_gain * protos.positions[cell][i];
          if (sounding_now) v[i] += spec.sound_cue_gain * protos.sound_cue[i];
        }
      }
      add_noise(v, spec.noise_std, rng);
      std::copy(v.begin(), v.end(), visual.begin() + (t * hw + cell) * d);
    }
  }

  VideoFeatures out;
  out.video_id = script.video_id;
  out.audio = Tensor::from_data({spec.t1, d}, std::move(audio));
  out.visual = Tensor::from_data({spec.t1, spec.h, spec.w, d}, std::move(visual));
  return out;
}

GeneratedVideo gen_video(const ScenarioSpec& spec, const Prototypes& protos,
                         Rng& rng, std::string video_id) {
  GeneratedVideo out;
  out.script = gen_script(spec, rng, std::move(video_id));
  out.features = render_video(spec, protos, out.script, rng);
  return out;
}

// ---- answers --------------------------------------------------------------------

std::string quadrant_name(std::size_t cell, std::size_t h, std::size_t w) {
  std::size_t r = cell / w, c = cell % w;
  std::string name = (r * 2 >= h) ? "bottom" : "top";
  name += (c * 2 >= w) ? "_right" : "_left";
  return name;
}

std::vector<std::string> answer_vocabulary(const ScenarioSpec& spec) {
  auto has = [&](QuestionType t) {
    for (auto& [qt, wgt] : spec.question_mix)
      if (qt == t && wgt > 0) return true;
    return false;
  };
  std::vector<std::string> vocab;
  if (has(QuestionType::existential)) {
    vocab.push_back("yes");
    vocab.push_back("no");
  }
  if (has(QuestionType::counting))
    for (std::size_t c = 0; c <= spec.num_prototypes; ++c)
      vocab.push_back(std::to_string(c));
  if (has(QuestionType::temporal_first))
    for (std::size_t k = 0; k < spec.num_prototypes; ++k)
      vocab.push_back("object_" + std::to_string(k));
  if (has(QuestionType::location))
    for (const char* q : {"top_left", "top_right", "bottom_left", "bottom_right"})
      vocab.push_back(q);
  return vocab;
}

namespace {

std::size_t vocab_index(const std::vector<std::string>& vocab,
                        const std::string& answer) {
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] == answer) return i;
  throw ContractError(detail::msg("answer '", answer,
                                  "' missing from vocabulary"));
}

}  // namespace

std::size_t oracle_answer(const SceneScript& script, const Question& question,
                          const std::vector<std::string>& vocab) {
  switch (question.type) {
    case QuestionType::existential: {
      if (question.target_proto < 0)
        throw ContractError("existential question needs a target");
      bool yes = script.proto_sounds(
          static_cast<std::size_t>(question.target_proto));
      return vocab_index(vocab, yes ? "yes" : "no");
    }
    case QuestionType::counting: {
      return vocab_index(vocab,
                         std::to_string(script.sounding_protos().size()));
    }
    case QuestionType::temporal_first: {
      const SceneObject* first = nullptr;
      for (const auto& o : script.objects)
        if (o.sounds && (!first || o.onset < first->onset)) first = &o;
      if (!first)
        throw ContractError("temporal_first question on a silent scene");
      return vocab_index(vocab, "object_" + std::to_string(first->proto));
    }
    case QuestionType::location: {
      if (question.target_proto < 0)
        throw ContractError("location question needs a target");
      for (const auto& o : script.objects)
        if (o.proto == static_cast<std::size_t>(question.target_proto))
          return vocab_index(vocab, quadrant_name(o.cell, script.h, script.w));
      throw ContractError("location question about an absent object");
    }
  }
  throw ContractError("unknown question type");
}

QaSample gen_question_answer(const ScenarioSpec& spec, const Prototypes& protos,
                             const SceneScript& script, QuestionType type,
                             Rng& rng) {
  const std::size_t k = spec.num_prototypes;
  Question q;
  q.type = type;

  std::vector<std::size_t> present, sounding, silent_or_absent;
  for (std::size_t p = 0; p < k; ++p) {
    if (script.proto_present(p)) present.push_back(p);
    if (script.proto_sounds(p))
      sounding.push_back(p);
    else
      silent_or_absent.push_back(p);
  }

  switch (type) {
    case QuestionType::existential: {
      // balance yes/no by sampling the pool first
      bool want_yes = rng.bernoulli(0.5);
      const auto& pool = (want_yes || silent_or_absent.empty())
                             ? sounding
                             : silent_or_absent;
      q.target_proto = static_cast<int>(pool[rng.index(pool.size())]);
      break;
    }
    case QuestionType::counting:
      q.target_proto = -1;
      break;
    case QuestionType::temporal_first: {
      // targets an object that is present and sounding; absent targets are
      // resampled by construction
      q.target_proto = static_cast<int>(sounding[rng.index(sounding.size())]);
      break;
    }
    case QuestionType::location: {
      q.target_proto = static_cast<int>(present[rng.index(present.size())]);
      break;
    }
  }

  const std::vector<double>& tgt =
      q.target_proto < 0 ? protos.any_object
                         : protos.text[static_cast<std::size_t>(q.target_proto)];
  std::vector<double> f_q(tgt);
  const auto& type_emb = protos.type_embeddings[static_cast<std::size_t>(type)];
  for (std::size_t i = 0; i < f_q.size(); ++i) f_q[i] += type_emb[i];
  normalize(f_q);

  QaSample sample;
  sample.question = Tensor::from_data({1, spec.d}, std::move(f_q));
  sample.target = Tensor::from_data({1, spec.d}, tgt);
  sample.type = type;
  sample.video_id = script.video_id;
  sample.latent = q;
  sample.answer = oracle_answer(script, q, answer_vocabulary(spec));
  return sample;
}

// ---- dataset emission -------------------------------------------------------------

namespace {

QuestionType sample_type(const ScenarioSpec& spec, Rng& rng) {
  double u = rng.uniform();
  double acc = 0;
  for (auto& [t, wgt] : spec.question_mix) {
    acc += wgt;
    if (u < acc) return t;
  }
  return spec.question_mix.back().first;
}

}  // namespace

Manifest generate_split(const ScenarioSpec& spec, std::size_t n_videos,
                        std::size_t qa_per_video,
                        const std::filesystem::path& out_dir,
                        std::uint64_t video_stream) {
  spec.validate();
  std::filesystem::create_directories(out_dir);

  Prototypes protos = gen_prototypes(spec);
  Manifest m;
  m.root = out_dir;
  m.answer_vocab = answer_vocabulary(spec);
  m.d = spec.d;
  m.h = spec.h;
  m.w = spec.w;
  m.t1 = spec.t1;

  Rng base(spec.seed);
  std::size_t sample_idx = 0;
  for (std::size_t v = 0; v < n_videos; ++v) {
    Rng vrng = base.child(Rng::mix(0x71D50000ULL + v, video_stream));
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "vid_%05zu", v);
    GeneratedVideo gv = gen_video(spec, protos, vrng, idbuf);

    std::string audio_file = gv.script.video_id + "_audio.tsr";
    std::string visual_file = gv.script.video_id + "_visual.tsr";
    write_tensor_file(gv.features.audio, out_dir / audio_file);
    write_tensor_file(gv.features.visual, out_dir / visual_file);
    m.videos.push_back({gv.script.video_id, audio_file, visual_file});

    for (std::size_t qi = 0; qi < qa_per_video; ++qi) {
      QuestionType type = sample_type(spec, vrng);
      QaSample qa = gen_question_answer(spec, protos, gv.script, type, vrng);
      char qbuf[32], tbuf[32];
      std::snprintf(qbuf, sizeof qbuf, "q_%06zu.tsr", sample_idx);
      std::snprintf(tbuf, sizeof tbuf, "t_%06zu.tsr", sample_idx);
      write_tensor_file(qa.question, out_dir / qbuf);
      write_tensor_file(qa.target, out_dir / tbuf);
      m.samples.push_back({qa.video_id, qbuf, tbuf,
                           question_type_name(qa.type), qa.answer});
      ++sample_idx;
    }
  }
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

void generate_dataset(const DatasetSpec& spec,
                      const std::filesystem::path& out_dir) {
  generate_split(spec.scenario, spec.train_videos, spec.questions_per_video,
                 out_dir / "train", /*video_stream=*/0);
  generate_split(spec.scenario, spec.val_videos, spec.val_questions_per_video,
                 out_dir / "val", /*video_stream=*/1);
}

// ---- config parsing ----------------------------------------------------------------

DatasetSpec DatasetSpec::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(detail::msg("dataset spec: ", e.what()));
  }
  DatasetSpec spec;
  ScenarioSpec& sc = spec.scenario;
  try {
    if (doc.contains("k")) sc.num_prototypes = doc["k"].get<std::size_t>();
    if (doc.contains("d")) sc.d = doc["d"].get<std::size_t>();
    if (doc.contains("h")) sc.h = doc["h"].get<std::size_t>();
    if (doc.contains("w")) sc.w = doc["w"].get<std::size_t>();
    if (doc.contains("t1")) sc.t1 = doc["t1"].get<std::size_t>();
    if (doc.contains("noise_std")) sc.noise_std = doc["noise_std"].get<double>();
    if (doc.contains("distractor_rate"))
      sc.distractor_rate = doc["distractor_rate"].get<double>();
    if (doc.contains("seed")) sc.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("visual_gain")) sc.visual_gain = doc["visual_gain"].get<double>();
    if (doc.contains("position_gain"))
      sc.position_gain = doc["position_gain"].get<double>();
    if (doc.contains("sound_cue_gain"))
      sc.sound_cue_gain = doc["sound_cue_gain"].get<double>();
    if (doc.contains("sound_prob")) sc.sound_prob = doc["sound_prob"].get<double>();
    if (doc.contains("question_mix")) {
      sc.question_mix.clear();
      for (auto& [key, value] : doc["question_mix"].items())
        sc.question_mix.emplace_back(question_type_from_name(key),
                                     value.get<double>());
    }
    if (doc.contains("train_videos"))
      spec.train_videos = doc["train_videos"].get<std::size_t>();
    if (doc.contains("val_videos"))
      spec.val_videos = doc["val_videos"].get<std::size_t>();
    if (doc.contains("questions_per_video")) {
      spec.questions_per_video = doc["questions_per_video"].get<std::size_t>();
      spec.val_questions_per_video = spec.questions_per_video;
    }
    if (doc.contains("val_questions_per_video"))
      spec.val_questions_per_video =
          doc["val_questions_per_video"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(detail::msg("dataset spec: ", e.what()));
  }
  sc.validate();
  return spec;
}

DatasetSpec DatasetSpec::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError(detail::msg("cannot open dataset spec ", path.string()));
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace tass
