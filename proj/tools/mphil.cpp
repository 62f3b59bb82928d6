#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "mphil/metrics.hpp"
#include "mphil/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace mphil;

namespace {

std::vector<Graph> load_split(const std::string& data_dir, const std::string& split) {
  const fs::path path = fs::path(data_dir) / (split + ".jsonl");
  return load_jsonl(path.string());
}

Tensor normalized_rows(const Tensor& m) {
  Tensor out = m;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) sq += m.at(i, j) * m.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm > 0.0)
      for (std::size_t j = 0; j < m.cols(); ++j) out.at(i, j) /= norm;
  }
  return out;
}

ordered_json eval_report_json(const Checkpoint& ckpt, const std::vector<Graph>& graphs,
                              const std::string& split) {
  auto probs = infer(ckpt, graphs);
  std::vector<int> labels, preds;
  std::vector<double> pos_scores;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    labels.push_back(graphs[i].label);
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs[i].size(); ++c)
      if (probs[i][c] > probs[i][best]) best = c;
    preds.push_back(static_cast<int>(best));
    pos_scores.push_back(probs[i].size() > 1 ? probs[i][1] : 0.0);
  }
  // embeddings are unit rows for projected variants; normalize defensively
  // so cosine-distance separability stays meaningful for erm/no-projector
  SeparabilityStats sep =
      separability_report(normalized_rows(embed(ckpt, graphs)), labels, ckpt.config.seed);

  ordered_json report;
  report["split"] = split;
  report["accuracy"] = accuracy(preds, labels);
  if (ckpt.config.num_classes == 2) report["roc_auc"] = roc_auc(pos_scores, labels);
  report["intra_class_W1"] = sep.intra_mean;
  report["inter_class_W1"] = sep.inter_mean;
  report["per_class_counts"] = sep.per_class_counts;
  return report;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  TrainConfig config;
  std::string preset = "synthetic";
  std::string variant = "full";
};

void add_train_flags(CLI::App* cmd, TrainArgs& args) {
  cmd->add_option("--data", args.data_dir, "dataset directory (train/val/test.jsonl)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory")->required();
  cmd->add_option("--k", args.config.prototypes_per_class, "prototypes per class");
  cmd->add_option("--beta", args.config.beta, "prototype matching loss weight");
  cmd->add_option("--alpha", args.config.alpha, "prototype EMA rate");
  cmd->add_option("--tau", args.config.tau, "similarity temperature");
  cmd->add_option("--prune-n", args.config.prune_n, "assignment weights kept per sample");
  cmd->add_option("--epochs", args.config.epochs, "training epochs");
  cmd->add_option("--batch", args.config.batch_size, "batch size");
  cmd->add_option("--lr", args.config.learning_rate, "Adam learning rate");
  cmd->add_option("--seed", args.config.seed, "RNG seed");
  cmd->add_option("--preset", args.preset, "encoder preset")
      ->check(CLI::IsMember({"synthetic", "molecular"}));
  cmd->add_option("--variant", args.variant, "model variant")
      ->check(CLI::IsMember({"full", "no-ipm", "no-ps", "no-projector", "single-proto",
                             "no-update", "no-prune", "erm"}));
}

Checkpoint run_train(TrainArgs& args) {
  args.config.preset = preset_from_string(args.preset);
  args.config.variant = variant_from_string(args.variant);
  Dataset dataset;
  dataset.train = load_split(args.data_dir, "train");
  dataset.val = load_split(args.data_dir, "val");
  fs::create_directories(args.out_dir);
  TrainResult result = train(args.config, dataset);
  write_metrics_csv((fs::path(args.out_dir) / "metrics.csv").string(), result.log);
  save_checkpoint((fs::path(args.out_dir) / "checkpoint.json").string(), result.best);
  std::cerr << "best val " << result.best_val << " at epoch " << result.best.epoch
            << "\n";
  return result.best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hyperspherical multi-prototype graph classifier"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "create a synthetic motif OOD dataset");
  std::string task = "spmotif-binary";
  std::string gen_out;
  std::string shift = "basis";
  std::string feature_mode = "constant";
  DatasetSpec spec;
  gen->add_option("--task", task, "dataset family")->check(CLI::IsMember({"spmotif-binary"}));
  gen->add_option("--bias", spec.bias, "spurious base probability b");
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--train-count", spec.train_count, "train graphs");
  gen->add_option("--val-count", spec.val_count, "val graphs");
  gen->add_option("--test-count", spec.test_count, "test graphs");
  gen->add_option("--shift", shift, "test distribution shift")
      ->check(CLI::IsMember({"basis", "size"}));
  gen->add_option("--feature-mode", feature_mode, "node feature mode")
      ->check(CLI::IsMember({"constant", "degree", "random"}));

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  TrainArgs train_args;
  add_train_flags(tr, train_args);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  std::string ckpt_path, data_dir, split = "test", out_file;
  ev->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--split", split, "split name")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--out", out_file, "write the report here instead of stdout");

  // prototypes
  auto* proto = app.add_subcommand("prototypes", "nearest samples per prototype");
  std::string p_ckpt, p_data, p_split = "test", p_out;
  std::size_t top_m = 5;
  proto->add_option("--ckpt", p_ckpt, "checkpoint file")->required();
  proto->add_option("--data", p_data, "dataset directory")->required();
  proto->add_option("--split", p_split, "split name")
      ->check(CLI::IsMember({"train", "val", "test"}));
  proto->add_option("--top", top_m, "samples per prototype");
  proto->add_option("--out", p_out, "write the CSV here instead of stdout");

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "dump hyperspherical embeddings");
  std::string e_ckpt, e_data, e_split = "test", e_out;
  exp->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  exp->add_option("--data", e_data, "dataset directory")->required();
  exp->add_option("--split", e_split, "split name")
      ->check(CLI::IsMember({"train", "val", "test"}));
  exp->add_option("--out", e_out, "output CSV")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train a variant and report test accuracy");
  TrainArgs ablate_args;
  add_train_flags(ab, ablate_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) {
      spec.shift = shift_from_string(shift);
      spec.feature_mode = feature_mode_from_string(feature_mode);
      Dataset ds = generate(spec);
      fs::create_directories(gen_out);
      save_jsonl((fs::path(gen_out) / "train.jsonl").string(), ds.train);
      save_jsonl((fs::path(gen_out) / "val.jsonl").string(), ds.val);
      save_jsonl((fs::path(gen_out) / "test.jsonl").string(), ds.test);
      std::cerr << "wrote " << ds.train.size() << "/" << ds.val.size() << "/"
                << ds.test.size() << " graphs to " << gen_out << "\n";
    } else if (*tr) {
      run_train(train_args);
    } else if (*ev) {
      Checkpoint ckpt = load_checkpoint(ckpt_path);
      ordered_json report = eval_report_json(ckpt, load_split(data_dir, split), split);
      if (out_file.empty()) {
        std::cout << report.dump(2) << "\n";
      } else {
        std::ofstream(out_file) << report.dump(2) << "\n";
      }
    } else if (*proto) {
      Checkpoint ckpt = load_checkpoint(p_ckpt);
      std::vector<Graph> graphs = load_split(p_data, p_split);
      Tensor emb = normalized_rows(embed(ckpt, graphs));
      auto table = nearest_samples(ckpt.bank, emb, top_m);
      std::ostringstream csv;
      csv << "class,prototype,rank,sample_index,similarity,label,base,motif\n";
      for (std::size_t c = 0; c < ckpt.bank.num_classes; ++c) {
        for (std::size_t k = 0; k < ckpt.bank.per_class; ++k) {
          const auto& ids = table[ckpt.bank.row_of(c, k)];
          for (std::size_t r = 0; r < ids.size(); ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < ckpt.bank.dim; ++j)
              dot += ckpt.bank.m.at(ckpt.bank.row_of(c, k), j) * emb.at(ids[r], j);
            csv << c << ',' << k << ',' << r << ',' << ids[r] << ',' << dot << ','
                << graphs[ids[r]].label << ',' << graphs[ids[r]].meta.base << ','
                << graphs[ids[r]].meta.motif << '\n';
          }
        }
      }
      if (p_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream(p_out) << csv.str();
      }
    } else if (*exp) {
      Checkpoint ckpt = load_checkpoint(e_ckpt);
      std::vector<Graph> graphs = load_split(e_data, e_split);
      Tensor emb = embed(ckpt, graphs);
      std::ofstream out(e_out);
      if (!out) throw std::runtime_error("cannot open " + e_out);
      out << "sample_index,label";
      for (std::size_t j = 0; j < emb.cols(); ++j) out << ",e" << j;
      out << "\n";
      char buf[32];
      for (std::size_t i = 0; i < emb.rows(); ++i) {
        out << i << ',' << graphs[i].label;
        for (std::size_t j = 0; j < emb.cols(); ++j) {
          std::snprintf(buf, sizeof(buf), "%.17g", emb.at(i, j));
          out << ',' << buf;
        }
        out << "\n";
      }
    } else if (*ab) {
      Checkpoint best = run_train(ablate_args);
      std::vector<Graph> test = load_split(ablate_args.data_dir, "test");
      ordered_json report;
      report["variant"] = ablate_args.variant;
      report["test_accuracy"] = evaluate_metric(best, test, ValMetric::accuracy);
      if (best.config.num_classes == 2) {
        auto probs = infer(best, test);
        std::vector<int> labels;
        std::vector<double> scores;
        for (std::size_t i = 0; i < test.size(); ++i) {
          labels.push_back(test[i].label);
          scores.push_back(probs[i][1]);
        }
        report["test_roc_auc"] = roc_auc(scores, labels);
      }
      std::cout << report.dump(2) << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
