// agnet: train, evaluate and inspect the keypoint-driven attention network.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "agnet/io/checkpoint.hpp"
#include "agnet/io/config.hpp"
#include "agnet/io/dataset.hpp"
#include "agnet/io/overlay.hpp"
#include "agnet/io/regions_json.hpp"
#include "agnet/synthetic.hpp"
#include "agnet/training/trainer.hpp"

namespace fs = std::filesystem;
using namespace agnet;

namespace {

struct TrainArgs {
  std::string config, resume, dataset, out, log;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  std::optional<std::size_t> workers;
};

void append_log(const std::string& path, const EpochStats& s, bool fresh) {
  const bool header = fresh || !fs::exists(path);
  std::ofstream out(path, fresh ? std::ios::trunc : std::ios::app);
  if (!out) throw IoError("cannot write log " + path);
  if (header) out << csv_header() << "\n";
  out << csv_row(s) << "\n";
}

int cmd_train(const TrainArgs& a) {
  io::RunConfig run;
  std::optional<io::Checkpoint> resumed;
  if (!a.resume.empty()) {
    resumed = io::load_checkpoint(a.resume);
    run = resumed->meta.config;
    run.checkpoint = a.resume;  // checkpoints keep no paths; continue in place unless --out says otherwise
  }
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw ConfigError("cannot open config " + a.config);
    std::stringstream ss;
    ss << in.rdbuf();
    io::apply_config_text(run, ss.str(), a.config);
  }
  ExperimentConfig& exp = run.experiment;
  if (a.epochs) exp.train.epochs = *a.epochs;
  if (a.seed) exp.train.seed = *a.seed;
  if (a.lr) exp.train.lr = *a.lr;
  if (a.workers) exp.train.workers = *a.workers;
  if (!a.dataset.empty()) run.dataset = a.dataset;
  if (!a.out.empty()) run.checkpoint = a.out;
  if (!a.log.empty()) run.log = a.log;
  if (run.dataset.empty()) throw ConfigError("no dataset given (use --dataset or data.dataset)");
  exp.train.validate();

  const io::DatasetManifest manifest = io::ingest_dataset(run.dataset);
  const std::vector<LabeledImage> data = io::load_split(manifest, "train", exp.train.image_size);

  Model<float> model;
  SgdState<float> opt;
  int start_epoch = 0;
  if (resumed) {
    if (resumed->meta.num_classes != manifest.num_classes()) {
      throw DatasetError("class-count mismatch: checkpoint has " + std::to_string(resumed->meta.num_classes) +
                         " classes, dataset has " + std::to_string(manifest.num_classes()));
    }
    model.config = exp.model_config(manifest.num_classes());
    model.params = std::move(resumed->params);
    opt = make_optimizer(model, exp.train);
    if (!resumed->velocity.empty()) opt.velocity = std::move(resumed->velocity);
    start_epoch = resumed->meta.epoch;
  } else {
    model = make_model<float>(exp, manifest.num_classes());
    opt = make_optimizer(model, exp.train);
  }

  auto save = [&](int epoch) {
    io::Checkpoint ck{io::make_meta(run, model.config, manifest.classes, epoch), model.params, opt.velocity};
    io::save_checkpoint(run.checkpoint, ck);
  };
  if (start_epoch == 0) {
    std::ofstream(run.log, std::ios::trunc) << csv_header() << "\n";
  }
  if (start_epoch >= exp.train.epochs) save(start_epoch);
  train<float>(data, model, opt, exp, start_epoch, [&](const EpochStats& s, const Model<float>&, const SgdState<float>&) {
    append_log(run.log, s, false);
    save(s.epoch);
    std::printf("epoch %d  lr %.3g  loss %.4f  top-1 %.2f  (%.1fs)\n", s.epoch, s.lr, s.train_loss, 100 * s.train_top1,
                s.wall_seconds);
    std::fflush(stdout);
  });
  const EvalReport r = evaluate(data, model, exp);
  std::printf("final train top-1: %.2f\n", 100 * r.top1);
  std::printf("checkpoint: %s\n", run.checkpoint.c_str());
  return 0;
}

nlohmann::json report_json(const EvalReport& r, const std::vector<std::string>& classes) {
  nlohmann::json j{{"top1", r.top1}, {"top5", r.top5}, {"mAP", r.mean_ap}, {"count", r.count}, {"confusion", r.confusion}};
  auto& per = j["per_class"] = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class_ap.size(); ++c) {
    nlohmann::json ap = std::isnan(r.per_class_ap[c]) ? nlohmann::json(nullptr) : nlohmann::json(r.per_class_ap[c]);
    per.push_back({{"class", c < classes.size() ? classes[c] : std::to_string(c)}, {"ap", ap}});
  }
  return j;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& split,
             const std::string& report, const std::string& predictions, std::optional<std::size_t> workers) {
  const io::DatasetManifest manifest = io::ingest_dataset(dataset);
  io::Checkpoint ck = io::load_checkpoint(checkpoint);
  if (ck.meta.num_classes != manifest.num_classes()) {
    throw DatasetError("class-count mismatch: checkpoint has " + std::to_string(ck.meta.num_classes) +
                       " classes, dataset has " + std::to_string(manifest.num_classes()));
  }
  ExperimentConfig exp = ck.meta.config.experiment;
  if (workers) exp.train.workers = *workers;
  const std::vector<LabeledImage> data = io::load_split(manifest, split, exp.train.image_size);
  std::vector<int> labels;
  for (const auto& d : data) labels.push_back(d.label);

  std::vector<std::vector<double>> probs;
  if (!predictions.empty()) {
    // Injected probabilities, one row per item of the split in manifest order.
    std::ifstream in(predictions);
    if (!in) throw IoError("cannot open " + predictions);
    try {
      probs = nlohmann::json::parse(in).get<std::vector<std::vector<double>>>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed predictions file " + predictions + ": " + e.what());
    }
  } else {
    Model<float> model{exp.model_config(ck.meta.num_classes), std::move(ck.params)};
    probs = predict(data, model, exp);
  }
  const EvalReport r = evaluate_predictions(probs, labels, manifest.num_classes());
  std::printf("%s\n", format_report(r).c_str());
  if (!report.empty()) {
    std::ofstream out(report);
    if (!out) throw IoError("cannot write report " + report);
    out << report_json(r, manifest.classes).dump(2) << "\n";
  }
  return 0;
}

RegionProposal propose(const std::string& image, int kappa, const std::string& config) {
  io::RunConfig run;
  if (!config.empty()) run = io::load_config(config);
  run.experiment.train.kappa = kappa;
  const RgbImage img = io::read_image(image);
  return propose_regions(to_grayscale(img), run.experiment.region_config());
}

int cmd_inspect(const std::string& image, int kappa, const std::string& out, const std::string& config) {
  const std::string text = io::region_json(propose(image, kappa, config)).dump(2);
  if (out.empty()) {
    std::printf("%s\n", text.c_str());
  } else {
    std::ofstream f(out);
    if (!f) throw IoError("cannot write " + out);
    f << text << "\n";
  }
  return 0;
}

int cmd_visualize(const std::string& image, int kappa, const std::string& out, std::size_t secondary,
                  const std::string& config) {
  const RegionProposal p = propose(image, kappa, config);
  io::write_image(out, io::render_overlay(io::read_image(image), p, secondary));
  return 0;
}

int cmd_synth(const std::string& out, const SyntheticConfig& cfg) {
  io::write_dataset(out, generate_synthetic(cfg));
  std::printf("wrote %d classes to %s\n", cfg.classes, out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AG-Net: keypoint-driven semantic regions with intra- and inter-region attention"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus CSV log");
  train_cmd->add_option("--config", ta.config, "key = value config file");
  train_cmd->add_option("--epochs", ta.epochs, "total epochs (a resumed run continues up to this count)");
  train_cmd->add_option("--resume", ta.resume, "checkpoint to continue from");
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--dataset", ta.dataset, "dataset root");
  train_cmd->add_option("--out", ta.out, "checkpoint path");
  train_cmd->add_option("--log", ta.log, "CSV epoch log");
  train_cmd->add_option("--workers", ta.workers, "worker threads (default AGNET_THREADS or all cores)");

  std::string checkpoint, dataset, split = "test", report, predictions;
  std::optional<std::size_t> eval_workers;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--dataset", dataset)->required();
  eval_cmd->add_option("--split", split)->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_option("--report", report, "JSON report path");
  eval_cmd->add_option("--predictions", predictions, "score injected probabilities instead of running the model");
  eval_cmd->add_option("--workers", eval_workers);

  std::string image, out, config;
  int kappa = 8;
  std::size_t secondary = 0;
  auto* inspect_cmd = app.add_subcommand("inspect-regions", "print keypoints, GMM and region boxes as JSON");
  inspect_cmd->add_option("--image", image)->required();
  inspect_cmd->add_option("--kappa", kappa)->check(CLI::Range(1, 64));
  inspect_cmd->add_option("--out", out, "JSON path (stdout when omitted)");
  inspect_cmd->add_option("--config", config, "detector and GMM settings");

  auto* vis_cmd = app.add_subcommand("visualize", "draw keypoints and region boxes over the image");
  vis_cmd->add_option("--image", image)->required();
  vis_cmd->add_option("--kappa", kappa)->check(CLI::Range(1, 64));
  vis_cmd->add_option("--out", out)->required();
  vis_cmd->add_option("--secondary", secondary, "index of the dashed secondary box");
  vis_cmd->add_option("--config", config, "detector and GMM settings");

  SyntheticConfig sc;
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic blob dataset");
  synth_cmd->add_option("--out", out)->required();
  synth_cmd->add_option("--classes", sc.classes)->check(CLI::Range(2, 4));
  synth_cmd->add_option("--per-class", sc.per_class);
  synth_cmd->add_option("--size", sc.size);
  synth_cmd->add_option("--seed", sc.seed);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(checkpoint, dataset, split, report, predictions, eval_workers);
    if (*inspect_cmd) return cmd_inspect(image, kappa, out, config);
    if (*vis_cmd) return cmd_visualize(image, kappa, out, secondary, config);
    if (*synth_cmd) return cmd_synth(out, sc);
  } catch (const agnet::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}
