#ifndef TASS_SYNTHGEN_HPP
#define TASS_SYNTHGEN_HPP

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tass/featureio.hpp"
#include "tass/rng.hpp"
#include "tass/tensor.hpp"

namespace tass {

enum class QuestionType { existential, counting, temporal_first, location };

constexpr std::array<QuestionType, 4> kAllQuestionTypes = {
    QuestionType::existential, QuestionType::counting,
    QuestionType::temporal_first, QuestionType::location};

const char* question_type_name(QuestionType t);
QuestionType question_type_from_name(const std::string& name);

/// Parameters of the synthetic scene distribution.
struct ScenarioSpec {
  std::size_t num_prototypes = 6;  // object kinds, K >= 2
  std::size_t d = 64;
  std::size_t h = 7, w = 7;
  std::size_t t1 = 10;
  double noise_std = 0.05;       // expected noise vector norm
  double distractor_rate = 0.0;  // chance of each extra non-target object
  std::uint64_t seed = 1;
  /// Weights over question types; nonnegative, sum 1.
  std::vector<std::pair<QuestionType, double>> question_mix = {
      {QuestionType::existential, 0.25},
      {QuestionType::counting, 0.25},
      {QuestionType::temporal_first, 0.25},
      {QuestionType::location, 0.25}};

  // Renderer gains. Visual cell content is scaled up relative to the audio
  // features so that raw dot-product region attention has usable contrast.
  // Cells whose object is currently sounding additionally carry the shared
  // sounding-cue direction, the visual correlate of emitting sound.
  double visual_gain = 3.0;
  double position_gain = 3.0;
  double sound_cue_gain = 3.0;
  double sound_prob = 0.6;  // chance that a present object ever sounds

  void validate() const;
};

/// Fixed geometry shared by every video drawn from one spec. Text prototypes
/// sit close to their visual counterparts while audio prototypes form an
/// independent basis.
struct Prototypes {
  std::vector<std::vector<double>> visual;     // K x d unit vectors
  std::vector<std::vector<double>> audio;      // K x d unit vectors
  std::vector<std::vector<double>> text;       // K x d unit vectors
  std::vector<std::vector<double>> positions;  // h*w x d unit vectors
  std::vector<double> sound_cue;               // shared sounding-state direction
  std::vector<double> any_object;              // target token for untargeted questions
  std::array<std::vector<double>, 4> type_embeddings;  // per question type
};

Prototypes gen_prototypes(const ScenarioSpec& spec);

struct SceneObject {
  std::size_t proto = 0;  // prototype index
  std::size_t cell = 0;   // flat grid cell, row-major
  bool sounds = false;
  std::size_t onset = 0;  // first sounding segment; meaningful when sounds
};

/// Latent ground truth for one video; the brute-force answer oracle reads
/// only this, never the rendered features.
struct SceneScript {
  std::string video_id;
  std::size_t t1 = 0;
  std::size_t h = 0, w = 0;
  std::vector<SceneObject> objects;

  bool proto_present(std::size_t proto) const;
  bool proto_sounds(std::size_t proto) const;
  std::vector<std::size_t> sounding_protos_at(std::size_t t) const;
  std::vector<std::size_t> sounding_protos() const;  // distinct, ever-sounding
};

SceneScript gen_script(const ScenarioSpec& spec, Rng& rng,
                       std::string video_id);
VideoFeatures render_video(const ScenarioSpec& spec, const Prototypes& protos,
                           const SceneScript& script, Rng& rng);

struct GeneratedVideo {
  VideoFeatures features;
  SceneScript script;
};
GeneratedVideo gen_video(const ScenarioSpec& spec, const Prototypes& protos,
                         Rng& rng, std::string video_id);

struct Question {
  QuestionType type = QuestionType::existential;
  int target_proto = -1;  // -1 = untargeted ("any object")
};

/// Answer vocabulary covering the question types with nonzero weight;
/// deterministic order.
std::vector<std::string> answer_vocabulary(const ScenarioSpec& spec);

/// Quadrant label of a flat cell in an h x w grid.
std::string quadrant_name(std::size_t cell, std::size_t h, std::size_t w);

/// Exhaustive evaluation over the latent script. Returns an index into
/// `vocab`. Never consults rendered features.
std::size_t oracle_answer(const SceneScript& script, const Question& question,
                          const std::vector<std::string>& vocab);

struct QaSample {
  Tensor question;  // f_q, 1 x d
  Tensor target;    // f_tgt, 1 x d
  QuestionType type = QuestionType::existential;
  std::size_t answer = 0;  // index into the vocabulary
  std::string video_id;
  Question latent;  // the planted question, kept for tests
};

QaSample gen_question_answer(const ScenarioSpec& spec, const Prototypes& protos,
                             const SceneScript& script, QuestionType type,
                             Rng& rng);

/// Dataset generation config for the gen-data CLI.
struct DatasetSpec {
  ScenarioSpec scenario;
  std::size_t train_videos = 250;
  std::size_t val_videos = 125;
  std::size_t questions_per_video = 8;
  std::size_t val_questions_per_video = 4;

  static DatasetSpec from_json_file(const std::filesystem::path& path);
  static DatasetSpec from_json_text(const std::string& text);
};

/// Writes one split (manifest + tensor files) under out_dir. Prototypes and
/// scene geometry derive from the scenario seed alone, so splits written
/// from the same spec share one world; `video_stream` picks a disjoint
/// stream of scenes within that world.
Manifest generate_split(const ScenarioSpec& spec, std::size_t n_videos,
                        std::size_t qa_per_video,
                        const std::filesystem::path& out_dir,
                        std::uint64_t video_stream = 0);
/// Writes out_dir/train and out_dir/val: same prototype world, disjoint
/// scene streams.
void generate_dataset(const DatasetSpec& spec,
                      const std::filesystem::path& out_dir);

}  // namespace tass

#endif  // TASS_SYNTHGEN_HPP
