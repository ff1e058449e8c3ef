#include "tass/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace tass {

namespace {

using nlohmann::json;

double now_seconds() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

// ---- config ----------------------------------------------------------------

TrainConfig TrainConfig::from_json_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(detail::msg("train config: ", e.what()));
  }
  TrainConfig c;
  try {
    auto get_num = [&](const char* key, auto& slot) {
      if (doc.contains(key))
        slot = doc[key].get<std::remove_reference_t<decltype(slot)>>();
    };
    get_num("lambda", c.lambda);
    get_num("tau", c.tau);
    get_num("lr", c.lr);
    get_num("lr_decay", c.lr_decay);
    get_num("lr_decay_every", c.lr_decay_every);
    get_num("t", c.t);
    get_num("d", c.d);
    get_num("h", c.h);
    get_num("w", c.w);
    get_num("n_heads", c.n_heads);
    get_num("batch_size", c.batch_size);
    get_num("epochs", c.epochs);
    get_num("t2", c.t2);
    get_num("seed", c.seed);
    if (doc.contains("no_target_aware"))
      c.no_target_aware = doc["no_target_aware"].get<bool>();
    if (doc.contains("no_match_loss"))
      c.no_match_loss = doc["no_match_loss"].get<bool>();
    if (doc.contains("no_cms")) c.no_cms = doc["no_cms"].get<bool>();
    if (doc.contains("stream")) c.stream = doc["stream"].get<std::string>();
    if (doc.contains("order")) {
      c.order = doc["order"].get<std::string>();
      c.order_explicit = true;
    }
    if (doc.contains("train_dir")) c.train_dir = doc["train_dir"].get<std::string>();
    if (doc.contains("val_dir")) c.val_dir = doc["val_dir"].get<std::string>();
    if (doc.contains("checkpoint_every_epoch"))
      c.checkpoint_every_epoch = doc["checkpoint_every_epoch"].get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(detail::msg("train config: ", e.what()));
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(detail::msg("cannot open config ", path.string()));
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void TrainConfig::validate() const {
  if (lambda < 0) throw ConfigError("lambda must be >= 0");
  if (lr <= 0) throw ConfigError("lr must be > 0");
  if (lr_decay <= 0 || lr_decay > 1)
    throw ConfigError("lr_decay must lie in (0, 1]");
  if (lr_decay_every == 0) throw ConfigError("lr_decay_every must be >= 1");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (t2 == 0) throw ConfigError("t2 must be >= 1");
  if (tau < 0) throw ConfigError("tau must be >= 0");
  if (stream != "single" && stream != "dual")
    throw ConfigError(detail::msg("stream must be single or dual, got '",
                                  stream, "'"));
  if (stream == "dual" && order_explicit)
    throw ConfigError("dual stream forbids the order flag");
  stream_order_from_name(order);  // throws on unknown names
}

ModelConfig TrainConfig::model_config(std::size_t vocab_size) const {
  ModelConfig m;
  m.d = d;
  m.h = h;
  m.w = w;
  m.t = t;
  m.n_heads = n_heads;
  m.vocab_size = vocab_size;
  m.tau = tau;
  m.lambda = lambda;
  m.no_target_aware = no_target_aware;
  m.no_match_loss = no_match_loss;
  m.no_cms = no_cms;
  m.dual_stream = stream == "dual";
  m.order = stream_order_from_name(order);
  m.validate();
  return m;
}

// ---- dataset loading ----------------------------------------------------------

LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t t2) {
  std::filesystem::path manifest_path = dir;
  if (std::filesystem::is_directory(dir)) manifest_path = dir / "manifest.json";
  Manifest manifest = load_manifest(manifest_path);

  LoadedDataset out;
  out.vocab = manifest.answer_vocab;
  out.d = manifest.d;
  out.h = manifest.h;
  out.w = manifest.w;
  out.t = (manifest.t1 + t2 - 1) / t2;
  const std::size_t hw = manifest.h * manifest.w;

  struct CachedVideo {
    Tensor audio;
    std::vector<Tensor> segments;
  };
  std::map<std::string, CachedVideo> cache;
  for (const auto& mv : manifest.videos) {
    VideoFeatures vf = manifest.load_video(mv.video_id);
    VideoFeatures pooled = pool_preprocess(vf, t2);
    CachedVideo cv;
    cv.audio = pooled.audio;
    cv.segments.reserve(out.t);
    const double* base = pooled.visual.values().data();
    for (std::size_t t = 0; t < out.t; ++t)
      cv.segments.push_back(Tensor::from_data(
          {hw, manifest.d},
          std::vector<double>(base + t * hw * manifest.d,
                              base + (t + 1) * hw * manifest.d)));
    cache.emplace(mv.video_id, std::move(cv));
  }

  out.samples.reserve(manifest.samples.size());
  for (const auto& ms : manifest.samples) {
    const CachedVideo& cv = cache.at(ms.video_id);
    SampleInput s;
    s.audio = cv.audio;
    s.segments = cv.segments;
    s.question = manifest.load_question(ms);
    s.target = manifest.load_target(ms);
    s.answer = ms.answer;
    s.video_id = ms.video_id;
    s.question_type = ms.question_type;
    out.samples.push_back(std::move(s));
  }
  return out;
}

// ---- optimizer -------------------------------------------------------------------

void adam_step(const std::vector<ParamRef>& params, AdamState& state,
               double lr) {
  // validate before mutating anything so a bad gradient aborts the whole step
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad())
      if (!std::isfinite(g))
        throw NumericError(detail::msg("non-finite gradient in ", p.name));
  }
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));

  for (const auto& p : params) {
    Tensor t = p.tensor;
    auto& values = t.mutable_values();
    auto [it, inserted] = state.moments.try_emplace(
        p.name, std::vector<double>(values.size(), 0.0),
        std::vector<double>(values.size(), 0.0));
    auto& [m, v] = it->second;
    if (m.size() != values.size())
      throw ContractError(detail::msg("optimizer state size mismatch for ",
                                      p.name));
    std::span<const double> grad;
    if (t.has_grad()) grad = t.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

// ---- evaluation -------------------------------------------------------------------

namespace {

void dump_sample(const std::filesystem::path& dir, std::size_t index,
                 const SampleForward& fwd, json& index_doc,
                 const SampleInput& sample) {
  char tag[32];
  std::snprintf(tag, sizeof tag, "sample_%05zu", index);
  auto file = [&](const char* suffix) {
    return std::string(tag) + "_" + suffix + ".tsr";
  };

  write_tensor_file(fwd.attention.combined_weights, dir / file("wav"));
  write_tensor_file(fwd.attention.audio_weights, dir / file("wa"));
  write_tensor_file(fwd.attention.visual_weights, dir / file("wv"));
  write_tensor_file(fwd.attention.attended, dir / file("fatt"));
  write_tensor_file(fwd.attention.fused, dir / file("favq"));
  write_tensor_file(fwd.logits, dir / file("logits"));
  if (fwd.diag_audio_weights.defined()) {
    write_tensor_file(fwd.diag_audio_weights, dir / file("aq"));
    write_tensor_file(fwd.diag_visual_weights, dir / file("vq"));
  }

  // grounding maps stacked over segments
  auto stack_maps = [&](auto pick) {
    const std::size_t t = fwd.grounding.size();
    if (t == 0 || !pick(fwd.grounding[0]).defined()) return Tensor();
    const std::size_t hw = pick(fwd.grounding[0]).size();
    std::vector<double> all;
    all.reserve(t * hw);
    for (const auto& g : fwd.grounding) {
      auto vals = pick(g).values();
      all.insert(all.end(), vals.begin(), vals.end());
    }
    return Tensor::from_data({t, hw}, std::move(all));
  };
  Tensor s_a = stack_maps([](const GroundingOutput& g) { return g.audio_map; });
  if (s_a.defined()) write_tensor_file(s_a, dir / file("sa"));
  Tensor s_q = stack_maps([](const GroundingOutput& g) { return g.target_map; });
  if (s_q.defined()) write_tensor_file(s_q, dir / file("sq"));
  Tensor gated = stack_maps([](const GroundingOutput& g) { return g.gated_map; });
  if (gated.defined()) write_tensor_file(gated, dir / file("sq_gated"));
  Tensor final_w =
      stack_maps([](const GroundingOutput& g) { return g.final_weights; });
  if (final_w.defined()) write_tensor_file(final_w, dir / file("weights"));

  std::size_t pred = 0;
  for (std::size_t c = 1; c < fwd.logits.size(); ++c)
    if (fwd.logits.values()[c] > fwd.logits.values()[pred]) pred = c;
  index_doc["samples"].push_back({{"index", index},
                                  {"prefix", tag},
                                  {"video_id", sample.video_id},
                                  {"question_type", sample.question_type},
                                  {"answer", sample.answer},
                                  {"prediction", pred}});
}

}  // namespace

EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const LoadedDataset& data, std::size_t batch_size,
                    const std::filesystem::path* dump_dir) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (data.vocab.size() != cfg.vocab_size)
    throw ConfigError(detail::msg("dataset vocabulary of ", data.vocab.size(),
                                  " entries does not match head size ",
                                  cfg.vocab_size));
  const double start = now_seconds();

  json index_doc;
  if (dump_dir) {
    std::filesystem::create_directories(*dump_dir);
    index_doc["samples"] = json::array();
  }

  EvalReport report;
  report.parameter_count = params.parameter_count();
  double qa_sum = 0, cms_sum = 0, match_sum = 0;
  std::size_t match_batches = 0;
  Rng eval_rng(0x0E7A11);

  for (std::size_t begin = 0; begin < data.samples.size();
       begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.samples.size());
    std::span<const SampleInput> batch(data.samples.data() + begin,
                                       end - begin);
    Tape tape;
    Rng match_rng = eval_rng.child(begin);
    std::vector<SampleForward> fwd;
    BatchLoss loss = batch_forward(tape, params, cfg, batch, match_rng, &fwd);

    qa_sum += loss.qa * static_cast<double>(batch.size());
    cms_sum += loss.cms * static_cast<double>(batch.size());
    if (!cfg.no_match_loss) {
      match_sum += loss.match;
      ++match_batches;
    }

    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& logits = fwd[i].logits;
      std::size_t pred = 0;
      for (std::size_t c = 1; c < logits.size(); ++c)
        if (logits.values()[c] > logits.values()[pred]) pred = c;
      const bool hit = pred == batch[i].answer;
      report.per_type_counts[batch[i].question_type] += 1;
      report.per_type_accuracy[batch[i].question_type] += hit ? 1.0 : 0.0;
      if (dump_dir)
        dump_sample(*dump_dir, begin + i, fwd[i], index_doc, batch[i]);
    }
  }

  report.n_samples = data.samples.size();
  double hits = 0;
  for (auto& [type, acc] : report.per_type_accuracy) {
    hits += acc;
    acc /= static_cast<double>(report.per_type_counts[type]);
  }
  report.overall_accuracy =
      report.n_samples ? hits / static_cast<double>(report.n_samples) : 0.0;
  report.l_qa = report.n_samples ? qa_sum / report.n_samples : 0.0;
  report.l_cms = report.n_samples ? cms_sum / report.n_samples : 0.0;
  report.l_s = match_batches ? match_sum / match_batches : 0.0;
  report.wall_seconds = now_seconds() - start;

  if (dump_dir) {
    std::ofstream out(*dump_dir / "dump_index.json", std::ios::trunc);
    out << index_doc.dump(1) << "\n";
  }
  return report;
}

std::string EvalReport::to_json_text() const {
  json doc;
  doc["overall_accuracy"] = overall_accuracy;
  doc["n_samples"] = n_samples;
  doc["per_type_accuracy"] = per_type_accuracy;
  doc["per_type_counts"] = per_type_counts;
  doc["l_qa"] = l_qa;
  doc["l_cms"] = l_cms;
  doc["l_s"] = l_s;
  doc["parameter_count"] = parameter_count;
  doc["wall_seconds"] = wall_seconds;
  return doc.dump(1);
}

// ---- checkpoints --------------------------------------------------------------------

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json doc;
  doc["format"] = "tass-checkpoint";
  doc["version"] = 1;
  doc["config"] = {{"d", cfg.d},
                   {"h", cfg.h},
                   {"w", cfg.w},
                   {"t", cfg.t},
                   {"n_heads", cfg.n_heads},
                   {"vocab_size", cfg.vocab_size},
                   {"tau", cfg.tau},
                   {"lambda", cfg.lambda},
                   {"no_target_aware", cfg.no_target_aware},
                   {"no_match_loss", cfg.no_match_loss},
                   {"no_cms", cfg.no_cms},
                   {"dual_stream", cfg.dual_stream},
                   {"order", stream_order_name(cfg.order)}};
  doc["tensors"] = json::object();
  for (const auto& p : params.parameters()) {
    std::string file = p.name + ".tsr";
    write_tensor_file(p.tensor, dir / file);
    doc["tensors"][p.name] = file;
  }
  std::ofstream out(dir / "index.json", std::ios::trunc);
  if (!out)
    throw CheckpointError(detail::msg("cannot write checkpoint index under ",
                                      dir.string()));
  out << doc.dump(1) << "\n";
}

std::pair<ModelParams, ModelConfig> load_checkpoint(
    const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in)
    throw CheckpointError(detail::msg("missing checkpoint index under ",
                                      dir.string()));
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw CheckpointError(detail::msg("checkpoint index: ", e.what()));
  }
  if (doc.value("format", "") != "tass-checkpoint")
    throw CheckpointError("not a checkpoint index");

  ModelConfig cfg;
  try {
    const auto& jc = doc.at("config");
    cfg.d = jc.at("d").get<std::size_t>();
    cfg.h = jc.at("h").get<std::size_t>();
    cfg.w = jc.at("w").get<std::size_t>();
    cfg.t = jc.at("t").get<std::size_t>();
    cfg.n_heads = jc.at("n_heads").get<std::size_t>();
    cfg.vocab_size = jc.at("vocab_size").get<std::size_t>();
    cfg.tau = jc.at("tau").get<double>();
    cfg.lambda = jc.at("lambda").get<double>();
    cfg.no_target_aware = jc.at("no_target_aware").get<bool>();
    cfg.no_match_loss = jc.at("no_match_loss").get<bool>();
    cfg.no_cms = jc.at("no_cms").get<bool>();
    cfg.dual_stream = jc.at("dual_stream").get<bool>();
    cfg.order = stream_order_from_name(jc.at("order").get<std::string>());
  } catch (const json::exception& e) {
    throw CheckpointError(detail::msg("checkpoint config: ", e.what()));
  }

  ModelParams params = ModelParams::init(cfg, 0);
  for (const auto& p : params.parameters()) {
    if (!doc["tensors"].contains(p.name))
      throw CheckpointError(detail::msg("checkpoint lacks tensor ", p.name));
    std::filesystem::path file =
        dir / doc["tensors"][p.name].get<std::string>();
    Tensor loaded = read_tensor_file(file);
    if (loaded.shape() != p.tensor.shape())
      throw CheckpointError(detail::msg("tensor ", p.name, " has shape ",
                                        shape_str(loaded.shape()),
                                        ", expected ",
                                        shape_str(p.tensor.shape())));
    Tensor dst = p.tensor;
    auto& values = dst.mutable_values();
    std::copy(loaded.values().begin(), loaded.values().end(), values.begin());
  }
  return {std::move(params), cfg};
}

// ---- training -----------------------------------------------------------------------

TrainResult train_on(const TrainConfig& cfg, const LoadedDataset& train_set,
                     const LoadedDataset& val_set,
                     const std::filesystem::path* out_dir,
                     ModelParams* trained) {
  cfg.validate();
  if (train_set.vocab != val_set.vocab)
    throw ConfigError("train and validation vocabularies differ");
  auto check_dims = [&](const LoadedDataset& ds, const char* which) {
    if (ds.t != cfg.t || ds.d != cfg.d || ds.h != cfg.h || ds.w != cfg.w)
      throw ConfigError(detail::msg(
          which, " dataset dims (t=", ds.t, ", d=", ds.d, ", h=", ds.h,
          ", w=", ds.w, ") do not match config (t=", cfg.t, ", d=", cfg.d,
          ", h=", cfg.h, ", w=", cfg.w, ")"));
  };
  check_dims(train_set, "train");
  check_dims(val_set, "val");

  const double start = now_seconds();
  ModelConfig model_cfg = cfg.model_config(train_set.vocab.size());
  ModelParams params = ModelParams::init(model_cfg, cfg.seed);
  AdamState adam;
  Rng root(cfg.seed);

  TrainResult result;
  if (out_dir) std::filesystem::create_directories(*out_dir);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_now =
        cfg.lr * std::pow(cfg.lr_decay,
                          static_cast<double>(epoch / cfg.lr_decay_every));

    std::vector<std::size_t> order(train_set.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng = root.child(Rng::mix(0x5F0F, epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0, qa_sum = 0, cms_sum = 0, match_sum = 0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size();
         begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      std::vector<SampleInput> batch;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i)
        batch.push_back(train_set.samples[order[i]]);

      Tape tape;
      Rng match_rng = root.child(Rng::mix(0x3A7C + epoch, begin));
      BatchLoss loss = batch_forward(tape, params, model_cfg, batch, match_rng);
      if (!std::isfinite(loss.total.item()))
        throw NumericError(detail::msg("non-finite loss at epoch ", epoch,
                                       " batch ", batches));
      backward(loss.total, tape);
      adam_step(params.parameters(), adam, lr_now);
      for (auto& p : params.parameters()) {
        Tensor t = p.tensor;
        t.clear_grad();
      }

      loss_sum += loss.total.item();
      qa_sum += loss.qa;
      cms_sum += loss.cms;
      match_sum += loss.match;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_now;
    rec.train_loss = batches ? loss_sum / batches : 0.0;
    rec.l_qa = batches ? qa_sum / batches : 0.0;
    rec.l_cms = batches ? cms_sum / batches : 0.0;
    rec.l_s = batches ? match_sum / batches : 0.0;
    rec.val = evaluate(params, model_cfg, val_set, cfg.batch_size);
    result.best_val_accuracy =
        std::max(result.best_val_accuracy, rec.val.overall_accuracy);
    result.epoch_losses.push_back(rec.train_loss);
    if (out_dir && cfg.checkpoint_every_epoch) {
      char name[48];
      std::snprintf(name, sizeof name, "checkpoint_epoch_%03zu", epoch);
      save_checkpoint(params, model_cfg, *out_dir / name);
    }
    result.epochs.push_back(std::move(rec));
  }

  result.final_val = evaluate(params, model_cfg, val_set, cfg.batch_size);
  result.best_val_accuracy =
      std::max(result.best_val_accuracy, result.final_val.overall_accuracy);
  result.wall_seconds = now_seconds() - start;

  if (out_dir) {
    save_checkpoint(params, model_cfg, *out_dir / "checkpoint_final");
    json doc;
    doc["epoch_losses"] = result.epoch_losses;
    doc["best_val_accuracy"] = result.best_val_accuracy;
    doc["wall_seconds"] = result.wall_seconds;
    doc["final_val"] = json::parse(result.final_val.to_json_text());
    doc["epochs"] = json::array();
    for (const auto& rec : result.epochs)
      doc["epochs"].push_back({{"epoch", rec.epoch},
                               {"train_loss", rec.train_loss},
                               {"l_qa", rec.l_qa},
                               {"l_cms", rec.l_cms},
                               {"l_s", rec.l_s},
                               {"lr", rec.lr},
                               {"val", json::parse(rec.val.to_json_text())}});
    std::ofstream out(*out_dir / "report.json", std::ios::trunc);
    out << doc.dump(1) << "\n";
  }
  if (trained) *trained = params;
  return result;
}

TrainResult train_model(const TrainConfig& cfg,
                        const std::filesystem::path* out_dir) {
  cfg.validate();
  if (cfg.train_dir.empty() || cfg.val_dir.empty())
    throw ConfigError("train_dir and val_dir must be set");
  LoadedDataset train_set = load_dataset(cfg.train_dir, cfg.t2);
  LoadedDataset val_set = load_dataset(cfg.val_dir, cfg.t2);
  return train_on(cfg, train_set, val_set, out_dir);
}

// ---- ablation ------------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<std::string>& axes,
                                      const std::filesystem::path& out_csv) {
  base.validate();
  if (base.train_dir.empty() || base.val_dir.empty())
    throw ConfigError("ablation needs train_dir and val_dir");
  LoadedDataset train_set = load_dataset(base.train_dir, base.t2);
  LoadedDataset val_set = load_dataset(base.val_dir, base.t2);

  struct Variant {
    std::string name, axis, value;
    TrainConfig cfg;
  };
  std::vector<Variant> variants;
  variants.push_back({"full", "base", "-", base});
  for (const std::string& axis : axes) {
    if (axis == "ta") {
      TrainConfig c = base;
      c.no_target_aware = true;
      variants.push_back({"no_target_aware", axis, "true", c});
    } else if (axis == "ls") {
      TrainConfig c = base;
      c.no_match_loss = true;
      variants.push_back({"no_match_loss", axis, "true", c});
    } else if (axis == "cms") {
      TrainConfig c = base;
      c.no_cms = true;
      variants.push_back({"no_cms", axis, "true", c});
    } else if (axis == "tau") {
      for (double tau : {0.0, 0.005, 0.02, 0.025, 0.03}) {
        if (tau == base.tau) continue;
        TrainConfig c = base;
        c.tau = tau;
        variants.push_back({detail::msg("tau_", tau), axis, detail::msg(tau), c});
      }
    } else if (axis == "order") {
      for (const char* order : {"ILVA", "ILAV", "CatVA", "CatAV"}) {
        if (base.order == order) continue;
        TrainConfig c = base;
        c.order = order;
        c.order_explicit = false;
        variants.push_back({detail::msg("order_", order), axis, order, c});
      }
    } else if (axis == "stream") {
      TrainConfig c = base;
      c.stream = "dual";
      c.order_explicit = false;
      variants.push_back({"dual_stream", axis, "dual", c});
    } else {
      throw ConfigError(detail::msg("unknown ablation axis '", axis, "'"));
    }
  }

  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    ModelParams trained;
    TrainResult res = train_on(variant.cfg, train_set, val_set, nullptr,
                               &trained);
    AblationRow row;
    row.variant = variant.name;
    row.axis = variant.axis;
    row.value = variant.value;
    row.parameter_count = trained.parameter_count();
    row.val = res.final_val;
    rows.push_back(std::move(row));
  }

  // union of question types across rows keeps the CSV rectangular
  std::vector<std::string> types;
  for (const auto& row : rows)
    for (const auto& [type, acc] : row.val.per_type_accuracy)
      if (std::find(types.begin(), types.end(), type) == types.end())
        types.push_back(type);
  std::sort(types.begin(), types.end());

  if (!out_csv.empty()) {
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out)
      throw ConfigError(detail::msg("cannot write ", out_csv.string()));
    out << "variant,axis,value,overall_accuracy";
    for (const auto& t : types) out << ",acc_" << t;
    out << ",l_qa,l_cms,l_s,parameter_count,wall_seconds\n";
    for (const auto& row : rows) {
      out << row.variant << "," << row.axis << "," << row.value << ","
          << row.val.overall_accuracy;
      for (const auto& t : types) {
        auto it = row.val.per_type_accuracy.find(t);
        out << ","
            << (it == row.val.per_type_accuracy.end() ? 0.0 : it->second);
      }
      out << "," << row.val.l_qa << "," << row.val.l_cms << "," << row.val.l_s
          << "," << row.parameter_count << "," << row.val.wall_seconds << "\n";
    }
  }
  return rows;
}

}  // namespace tass
