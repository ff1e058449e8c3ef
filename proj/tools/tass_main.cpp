// Command-line front end: dataset generation, preprocessing, training,
// evaluation, gradient checking and the ablation matrix.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tass/gradcheck.hpp"
#include "tass/synthgen.hpp"
#include "tass/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir) {
  tass::DatasetSpec spec = tass::DatasetSpec::from_json_file(spec_path);
  tass::generate_dataset(spec, out_dir);
  tass::Manifest train = tass::load_manifest(fs::path(out_dir) / "train" / "manifest.json");
  tass::Manifest val = tass::load_manifest(fs::path(out_dir) / "val" / "manifest.json");
  json out{{"train_samples", train.samples.size()},
           {"val_samples", val.samples.size()},
           {"vocab_size", train.answer_vocab.size()},
           {"out", out_dir}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_preprocess(const std::string& in_dir, std::size_t t2,
                   const std::string& out_dir) {
  tass::Manifest m = tass::preprocess_dataset(in_dir, t2, out_dir);
  json out{{"videos", m.videos.size()},
           {"samples", m.samples.size()},
           {"t", m.t1},
           {"out", out_dir}};
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  tass::TrainConfig cfg = tass::TrainConfig::from_json_file(config_path);
  fs::path out = out_dir;
  tass::TrainResult res = tass::train_model(cfg, &out);
  json summary{{"epochs", res.epochs.size()},
               {"best_val_accuracy", res.best_val_accuracy},
               {"final_val_accuracy", res.final_val.overall_accuracy},
               {"wall_seconds", res.wall_seconds},
               {"checkpoint", (out / "checkpoint_final").string()},
               {"report", (out / "report.json").string()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_dir,
             const std::string& dump_dir, std::size_t batch_size,
             std::size_t t2) {
  auto [params, cfg] = tass::load_checkpoint(checkpoint);
  tass::LoadedDataset data = tass::load_dataset(data_dir, t2);
  fs::path dump = dump_dir;
  tass::EvalReport report = tass::evaluate(
      params, cfg, data, batch_size, dump_dir.empty() ? nullptr : &dump);
  std::cout << report.to_json_text() << "\n";
  return 0;
}

int cmd_gradcheck(double tol, std::uint64_t seed, double step) {
  auto rows = tass::run_gradcheck(seed, tol, step);
  bool all_pass = true;
  for (const auto& row : rows) {
    std::printf("%s %-32s max_rel_err=%.3e\n", row.pass ? "PASS" : "FAIL",
                row.name.c_str(), row.max_rel_err);
    all_pass = all_pass && row.pass;
  }
  std::printf("%s: %zu checks, tol %.1e\n", all_pass ? "PASS" : "FAIL",
              rows.size(), tol);
  return all_pass ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::string& axes_list,
               const std::string& out_csv) {
  tass::TrainConfig base = tass::TrainConfig::from_json_file(config_path);
  std::vector<std::string> axes;
  std::string token;
  for (char c : axes_list + ",") {
    if (c == ',') {
      if (!token.empty()) axes.push_back(token);
      token.clear();
    } else {
      token += c;
    }
  }
  auto rows = tass::run_ablation(base, axes, out_csv);
  for (const auto& row : rows)
    std::printf("%-18s axis=%-6s value=%-8s acc=%.4f params=%zu\n",
                row.variant.c_str(), row.axis.c_str(), row.value.c_str(),
                row.val.overall_accuracy, row.parameter_count);
  std::printf("wrote %s\n", out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"target-aware single-stream audio-visual question answering"};
  app.require_subcommand(1);

  std::string spec_path, out_dir, in_dir, config_path, checkpoint, data_dir;
  std::string dump_dir, axes = "ta,ls,cms", out_csv = "ablate.csv";
  std::size_t t2 = 2, batch_size = 64;
  double tol = 1e-5, step = 1e-5;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--spec", spec_path, "dataset spec JSON")->required();
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* prep = app.add_subcommand("preprocess", "pool feature sequences");
  prep->add_option("--in", in_dir, "input dataset directory")->required();
  prep->add_option("--t2", t2, "pooling window")->required();
  prep->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--config", config_path, "train config JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--dump-attention", dump_dir, "dump attention records here");
  eval->add_option("--batch-size", batch_size, "evaluation batch size");
  eval->add_option("--t2", t2, "pooling window applied at load")->default_val(1);

  auto* grad = app.add_subcommand("gradcheck", "finite-difference checks");
  grad->add_option("--tol", tol, "relative error tolerance");
  grad->add_option("--seed", seed, "base seed");
  grad->add_option("--step", step, "finite difference step");

  auto* ablate = app.add_subcommand("ablate", "run the ablation matrix");
  ablate->add_option("--config", config_path, "base train config JSON")->required();
  ablate->add_option("--axes", axes, "comma list: ta,ls,cms,tau,order,stream");
  ablate->add_option("--out", out_csv, "comparison CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(spec_path, out_dir);
    if (prep->parsed()) return cmd_preprocess(in_dir, t2, out_dir);
    if (train->parsed()) return cmd_train(config_path, out_dir);
    if (eval->parsed())
      return cmd_eval(checkpoint, data_dir, dump_dir, batch_size, t2);
    if (grad->parsed()) return cmd_gradcheck(tol, seed, step);
    if (ablate->parsed()) return cmd_ablate(config_path, axes, out_csv);
  } catch (const tass::Error& e) {
    json err{{"error", {{"type", e.kind()}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err{{"error", {{"type", "Error"}, {"message", e.what()}}}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
