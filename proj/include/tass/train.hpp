#ifndef TASS_TRAIN_HPP
#define TASS_TRAIN_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "tass/featureio.hpp"
#include "tass/model.hpp"

namespace tass {

struct TrainConfig {
  double lambda = 0.5;
  double tau = 0.025;
  double lr = 2e-4;
  double lr_decay = 0.1;
  std::size_t lr_decay_every = 12;  // epochs per decay step
  std::size_t t = 10;
  std::size_t d = 64;
  std::size_t h = 7, w = 7;
  std::size_t n_heads = 4;
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  std::size_t t2 = 1;  // pooling window applied when loading features
  std::uint64_t seed = 1;
  bool no_target_aware = false;
  bool no_match_loss = false;
  bool no_cms = false;
  std::string stream = "single";  // or "dual"
  std::string order = "ILVA";
  bool order_explicit = false;  // true when the config file set `order`
  std::string train_dir;
  std::string val_dir;
  bool checkpoint_every_epoch = false;

  static TrainConfig from_json_file(const std::filesystem::path& path);
  static TrainConfig from_json_text(const std::string& text);
  void validate() const;
  ModelConfig model_config(std::size_t vocab_size) const;
};

/// Dataset resident in memory, features pooled to the model's T.
struct LoadedDataset {
  std::vector<std::string> vocab;
  std::vector<SampleInput> samples;
  std::size_t t = 0, d = 0, h = 0, w = 0;
};

LoadedDataset load_dataset(const std::filesystem::path& dir, std::size_t t2);

// ---- optimizer -------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step_count = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      moments;  // name -> (m, v)
};

/// One Adam update with bias correction. Parameters without gradients are
/// treated as having zero gradient. Non-finite gradients abort the step.
void adam_step(const std::vector<ParamRef>& params, AdamState& state,
               double lr);

// ---- evaluation ---------------------------------------------------------------

struct EvalReport {
  std::map<std::string, double> per_type_accuracy;
  std::map<std::string, std::size_t> per_type_counts;
  double overall_accuracy = 0.0;
  std::size_t n_samples = 0;
  double l_qa = 0.0;
  double l_cms = 0.0;
  double l_s = 0.0;
  std::size_t parameter_count = 0;
  double wall_seconds = 0.0;

  std::string to_json_text() const;
};

/// Deterministic evaluation; optionally dumps per-sample attention records
/// and grounding maps as tensor files under dump_dir.
EvalReport evaluate(const ModelParams& params, const ModelConfig& cfg,
                    const LoadedDataset& data, std::size_t batch_size,
                    const std::filesystem::path* dump_dir = nullptr);

// ---- checkpoints ---------------------------------------------------------------

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg,
                     const std::filesystem::path& dir);
std::pair<ModelParams, ModelConfig> load_checkpoint(
    const std::filesystem::path& dir);

// ---- training -------------------------------------------------------------------

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean over batches
  double l_qa = 0.0, l_cms = 0.0, l_s = 0.0;
  double lr = 0.0;
  EvalReport val;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  EvalReport final_val;
  std::vector<double> epoch_losses;
  double best_val_accuracy = 0.0;
  double wall_seconds = 0.0;
};

/// Full training loop: shuffled batches, composite loss, Adam, stepwise lr
/// decay, per-epoch validation. Writes checkpoints and report.json when
/// out_dir is given.
TrainResult train_model(const TrainConfig& cfg,
                        const std::filesystem::path* out_dir = nullptr);

/// Variant of train_model on datasets already in memory (used by tests and
/// the ablation runner).
TrainResult train_on(const TrainConfig& cfg, const LoadedDataset& train_set,
                     const LoadedDataset& val_set,
                     const std::filesystem::path* out_dir = nullptr,
                     ModelParams* trained = nullptr);

// ---- ablation --------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  std::string axis;
  std::string value;
  std::size_t parameter_count = 0;
  EvalReport val;
};

/// Runs the requested ablation axes against the base config and writes a
/// comparison CSV. Supported axes: ta, ls, cms, tau, order, stream.
std::vector<AblationRow> run_ablation(const TrainConfig& base,
                                      const std::vector<std::string>& axes,
                                      const std::filesystem::path& out_csv);

}  // namespace tass

#endif  // TASS_TRAIN_HPP
