// Python bindings for the main operations: tensor file IO, the core
// numerical ops, dataset generation, training, evaluation and gradcheck.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "tass/gradcheck.hpp"
#include "tass/synthgen.hpp"
#include "tass/train.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

std::pair<std::vector<std::size_t>, std::vector<double>> tensor_out(
    const tass::Tensor& t) {
  return {t.shape(),
          std::vector<double>(t.values().begin(), t.values().end())};
}

py::dict report_dict(const tass::EvalReport& r) {
  py::dict out;
  out["overall_accuracy"] = r.overall_accuracy;
  out["n_samples"] = r.n_samples;
  out["per_type_accuracy"] = r.per_type_accuracy;
  out["l_qa"] = r.l_qa;
  out["l_cms"] = r.l_cms;
  out["l_s"] = r.l_s;
  out["parameter_count"] = r.parameter_count;
  out["wall_seconds"] = r.wall_seconds;
  return out;
}

}  // namespace

PYBIND11_MODULE(_tass, m) {
  m.doc() = "target-aware single-stream audio-visual question answering";

  py::register_exception<tass::Error>(m, "TassError");

  m.def(
      "softmax",
      [](const std::vector<double>& logits) {
        tass::Tape tape;
        tass::Tensor x = tass::Tensor::from_data({1, logits.size()}, logits);
        auto y = tass::softmax_lastdim(tape, x);
        return std::vector<double>(y.values().begin(), y.values().end());
      },
      py::arg("logits"), "Stable softmax of a vector.");

  m.def(
      "js_divergence",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        tass::Tape tape;
        return tass::js_divergence(tape,
                                   tass::Tensor::from_data({p.size()}, p),
                                   tass::Tensor::from_data({q.size()}, q))
            .item();
      },
      py::arg("p"), py::arg("q"),
      "Jensen-Shannon divergence of two probability vectors (natural log).");

  m.def(
      "pool_sequence",
      [](const std::vector<std::vector<double>>& seq, std::size_t t2) {
        if (seq.empty()) throw tass::ContractError("empty sequence");
        const std::size_t t = seq.size(), d = seq[0].size();
        std::vector<double> flat;
        flat.reserve(t * d);
        for (const auto& row : seq) {
          if (row.size() != d)
            throw tass::DimensionError("ragged sequence rows");
          flat.insert(flat.end(), row.begin(), row.end());
        }
        tass::Tensor pooled =
            tass::pool_sequence(tass::Tensor::from_data({t, d}, flat), t2);
        std::vector<std::vector<double>> out;
        const std::size_t rows = pooled.shape()[0];
        for (std::size_t r = 0; r < rows; ++r)
          out.emplace_back(pooled.values().begin() + r * d,
                           pooled.values().begin() + (r + 1) * d);
        return out;
      },
      py::arg("sequence"), py::arg("t2"),
      "Windowed temporal mean over a T x d sequence (tail averaged over its "
      "true length).");

  m.def(
      "write_tensor",
      [](const std::filesystem::path& path, const std::vector<std::size_t>& shape,
         const std::vector<double>& values) {
        tass::write_tensor_file(tass::Tensor::from_data(shape, values), path);
      },
      py::arg("path"), py::arg("shape"), py::arg("values"),
      "Write a tensor file (f32 storage, little-endian).");

  m.def(
      "read_tensor",
      [](const std::filesystem::path& path) {
        return tensor_out(tass::read_tensor_file(path));
      },
      py::arg("path"), "Read a tensor file; returns (shape, values).");

  m.def(
      "generate_dataset",
      [](const std::string& spec_json, const std::filesystem::path& out_dir) {
        tass::DatasetSpec spec = tass::DatasetSpec::from_json_text(spec_json);
        tass::generate_dataset(spec, out_dir);
        tass::Manifest train =
            tass::load_manifest(out_dir / "train" / "manifest.json");
        py::dict out;
        out["train_samples"] = train.samples.size();
        out["vocab_size"] = train.answer_vocab.size();
        return out;
      },
      py::arg("spec_json"), py::arg("out_dir"),
      "Generate a synthetic dataset from a JSON spec string.");

  m.def(
      "train",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        tass::TrainConfig cfg = tass::TrainConfig::from_json_text(config_json);
        tass::TrainResult res = tass::train_model(cfg, &out_dir);
        py::dict out;
        out["epochs"] = res.epochs.size();
        out["epoch_losses"] = res.epoch_losses;
        out["best_val_accuracy"] = res.best_val_accuracy;
        out["final_val"] = report_dict(res.final_val);
        out["wall_seconds"] = res.wall_seconds;
        return out;
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Train from a JSON config string; writes checkpoints and report.json.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint,
         const std::filesystem::path& data_dir, std::size_t t2,
         std::size_t batch_size) {
        auto [params, cfg] = tass::load_checkpoint(checkpoint);
        tass::LoadedDataset data = tass::load_dataset(data_dir, t2);
        return report_dict(tass::evaluate(params, cfg, data, batch_size));
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("t2") = 1,
      py::arg("batch_size") = 64, "Evaluate a checkpoint on a dataset.");

  m.def(
      "gradcheck",
      [](double tol, std::uint64_t seed, double step, std::size_t n_seeds) {
        auto rows = tass::run_gradcheck(seed, tol, step, n_seeds);
        bool all_pass = true;
        double worst = 0.0;
        std::string worst_name;
        py::list items;
        for (const auto& row : rows) {
          all_pass = all_pass && row.pass;
          if (row.max_rel_err >= worst) {
            worst = row.max_rel_err;
            worst_name = row.name;
          }
          py::dict item;
          item["name"] = row.name;
          item["max_rel_err"] = row.max_rel_err;
          item["pass"] = row.pass;
          items.append(item);
        }
        py::dict out;
        out["pass"] = all_pass;
        out["worst"] = worst_name;
        out["max_rel_err"] = worst;
        out["checks"] = items;
        return out;
      },
      py::arg("tol") = 1e-5, py::arg("seed") = 1, py::arg("step") = 1e-5,
      py::arg("n_seeds") = 10,
      "Finite-difference verification of all differentiable operations.");

  m.attr("__version__") = "0.1.0";
}
