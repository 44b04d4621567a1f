#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "agnet/error.hpp"
#include "agnet/image.hpp"
#include "agnet/net/agnet.hpp"
#include "agnet/net/params.hpp"
#include "agnet/numerics/ops.hpp"
#include "agnet/numerics/sgd.hpp"
#include "agnet/parallel.hpp"
#include "agnet/regions.hpp"
#include "agnet/training/augment.hpp"
#include "agnet/training/metrics.hpp"

namespace agnet {

/// Where semantic regions come from.
enum class RegionMode {
  keypoints,    // DoG keypoints clustered by a GMM
  feature_map,  // k-means over backbone feature vectors
  grid,         // uniform tiling, ignores content
  whole_image,  // no semantic regions, only the full image
};

/// Which semantic regions reach the network (the whole image always does).
enum class RegionSelection { both, primary, secondary };

inline const char* to_string(RegionMode m) {
  switch (m) {
    case RegionMode::keypoints: return "keypoints";
    case RegionMode::feature_map: return "feature_map";
    case RegionMode::grid: return "grid";
    case RegionMode::whole_image: return "whole_image";
  }
  return "keypoints";
}

inline const char* to_string(RegionSelection s) {
  switch (s) {
    case RegionSelection::both: return "both";
    case RegionSelection::primary: return "primary";
    case RegionSelection::secondary: return "secondary";
  }
  return "both";
}

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  double lr = 1e-5;
  double momentum = 0.99;
  double decay_factor = 0.1;
  int decay_every = 25;
  AugmentRanges augmentation;
  bool augment = true;
  std::uint64_t seed = 0;
  int kappa = 8;
  int image_size = 224;
  double min_region_side = 16.0;
  RegionMode region_mode = RegionMode::keypoints;
  RegionSelection region_selection = RegionSelection::both;
  std::size_t workers = 0;  // 0: AGNET_THREADS or hardware default

  void validate() const {
    if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
    if (!(lr >= 0)) throw ConfigError("train.lr must be non-negative");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (!(decay_factor > 0)) throw ConfigError("train.decay_factor must be positive");
    if (decay_every < 0) throw ConfigError("train.decay_every must be non-negative");
    if (kappa < 1) throw ConfigError("train.kappa must be at least 1");
    if (image_size < 32) throw ConfigError("train.image_size must be at least 32");
    const AugmentRanges& a = augmentation;
    if (!(a.translation >= 0) || !(a.rotation_degrees >= 0) || !(a.scale_min > 0) || a.scale_max < a.scale_min) {
      throw ConfigError("augmentation ranges are invalid");
    }
  }

  std::size_t worker_count() const { return workers ? workers : default_worker_count(); }
};

/// Everything needed to reproduce a run.
struct ExperimentConfig {
  TrainConfig train;
  ModelConfig model;
  DetectorConfig detector;
  GmmConfig gmm;

  RegionConfig region_config() const {
    RegionConfig r;
    r.kappa = train.kappa;
    r.min_side = train.min_region_side;
    r.detector = detector;
    r.gmm = gmm;
    r.gmm.k = train.kappa;
    return r;
  }

  /// The model config with image size and class count taken from the run.
  ModelConfig model_config(std::size_t num_classes) const {
    ModelConfig m = model;
    m.image_size = static_cast<std::size_t>(train.image_size);
    m.num_classes = num_classes;
    m.validate();
    return m;
  }
};

struct LabeledImage {
  RgbImage image;
  int label = 0;
  std::string id;
};

template <class T>
struct Model {
  ModelConfig config;
  ParamTensors<T> params;
};

template <class T>
Model<T> make_model(const ExperimentConfig& cfg, std::size_t num_classes) {
  Model<T> m;
  m.config = cfg.model_config(num_classes);
  m.params = init_params<T>(m.config, cfg.train.seed);
  return m;
}

template <class T>
SgdState<T> make_optimizer(Model<T>& model, const TrainConfig& t) {
  return make_sgd_state<T>(model.params.flat(), t.lr, t.momentum, t.decay_factor, t.decay_every);
}

/// The network's region list: the selected semantic regions, then the
/// whole image.
inline std::vector<BoundingBox> select_regions(const RegionSet& rs, RegionSelection sel) {
  std::vector<BoundingBox> out;
  if (sel != RegionSelection::secondary) out.insert(out.end(), rs.primary.begin(), rs.primary.end());
  if (sel != RegionSelection::primary) out.insert(out.end(), rs.secondary.begin(), rs.secondary.end());
  out.push_back(rs.whole_image);
  return out;
}

/// Region set for one (already augmented) image. `features` is only read in
/// feature-map mode.
template <class T>
RegionSet regions_for_image(const RgbImage& img, const ExperimentConfig& cfg, const Tensor<T>* features,
                            std::uint64_t seed) {
  const double w = img.width, h = img.height;
  const int kappa = cfg.train.kappa;
  switch (cfg.train.region_mode) {
    case RegionMode::keypoints: return build_region_set(to_grayscale(img), cfg.region_config());
    case RegionMode::feature_map:
      if (!features) throw Error("feature-map regions need the backbone output");
      return cluster_feature_map(*features, kappa, w, h, seed);
    case RegionMode::grid: return assemble_region_set(kappa, grid_regions(kappa, w, h), w, h, RegionSource::grid_fallback);
    case RegionMode::whole_image: {
      RegionSet rs;
      rs.whole_image = {0, 0, w, h};
      return rs;
    }
  }
  throw Error("unknown region mode");
}

template <class T>
struct ItemResult {
  double loss = 0;
  std::vector<double> probabilities;
  std::vector<Tensor<T>> grads;  // empty unless requested
};

/// One forward (and optionally backward) pass. The loss is scaled by
/// `loss_scale` before differentiation so a batch mean is a plain sum.
template <class T>
ItemResult<T> run_item(const Model<T>& model, const ExperimentConfig& cfg, const RgbImage& img, int label,
                       bool with_grad, double loss_scale, std::uint64_t seed) {
  Tape<T> tape;
  ParamVars<T> vars = bind(tape, model.params, with_grad);
  const Var<T> x = tape.constant(img.to_tensor<T>());
  const Var<T> map = backbone_forward(x, vars.backbone);
  const RegionSet rs = regions_for_image<T>(img, cfg, &map.value(), seed);
  const std::vector<BoundingBox> boxes = select_regions(rs, cfg.train.region_selection);
  const ForwardTrace<T> trace = head_forward(map, boxes, vars, model.config, img.width, img.height);
  const Var<T> probs = trace.classify.probabilities;

  ItemResult<T> out;
  out.probabilities.assign(probs.value().data().begin(), probs.value().data().end());
  const Var<T> loss = ops::cross_entropy(probs, static_cast<std::size_t>(label));
  out.loss = static_cast<double>(loss.value()[0]);
  if (with_grad && std::isfinite(out.loss)) {
    const Var<T> scaled = ops::scale(loss, static_cast<T>(loss_scale));
    tape.backward(scaled);
    for (Var<T>* v : vars.flat()) out.grads.push_back(tape.gradient(*v));
  }
  return out;
}

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_top1 = 0;
  double wall_seconds = 0;
};

inline std::string csv_header() { return "epoch,lr,train_loss,train_top1,wall_seconds"; }

inline std::string csv_row(const EpochStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.6f,%.3f", s.epoch, s.lr, s.train_loss, s.train_top1, s.wall_seconds);
  return buf;
}

template <class T>
using EpochCallback = std::function<void(const EpochStats&, const Model<T>&, const SgdState<T>&)>;

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, 0x5bu, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Runs epochs start_epoch+1 … cfg.train.epochs. Every item draws its
/// augmentation from a stream keyed on (seed, epoch, item index), so results
/// do not depend on the worker count.
template <class T>
std::vector<EpochStats> train(const std::vector<LabeledImage>& data, Model<T>& model, SgdState<T>& opt,
                              const ExperimentConfig& cfg, int start_epoch = 0,
                              const EpochCallback<T>& on_epoch = {}) {
  const TrainConfig& tc = cfg.train;
  tc.validate();
  if (data.empty()) throw TrainingError("training set is empty");
  for (const auto& item : data) {
    if (item.label < 0 || static_cast<std::size_t>(item.label) >= model.config.num_classes) {
      throw TrainingError("label " + std::to_string(item.label) + " of '" + item.id + "' is out of range");
    }
  }
  const std::size_t workers = tc.worker_count();
  std::vector<Tensor<T>*> params = model.params.flat();
  std::vector<EpochStats> log;

  for (int epoch = start_epoch + 1; epoch <= tc.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = opt.rate_for_epoch(epoch);
    const std::vector<std::size_t> order = epoch_order(data.size(), tc.seed, epoch);
    double loss_sum = 0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size));
      const std::size_t nb = end - start;
      std::vector<ItemResult<T>> results(nb);
      parallel_for(nb, workers, [&](std::size_t b) {
        const std::size_t idx = order[start + b];
        const LabeledImage& item = data[idx];
        std::mt19937_64 rng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch), idx + 1));
        const RgbImage img = tc.augment ? augment(item.image, tc.augmentation, rng) : item.image;
        results[b] = run_item(model, cfg, img, item.label, true, 1.0 / static_cast<double>(nb), rng());
      });

      bool finite = true;
      for (const auto& r : results) finite = finite && std::isfinite(r.loss);
      if (finite) {
        for (const auto& r : results)
          for (const auto& g : r.grads) finite = finite && g.all_finite();
      }
      if (!finite) {
        std::string ids;
        for (std::size_t b = 0; b < nb; ++b) ids += (b ? ", " : "") + data[order[start + b]].id;
        throw TrainingError("non-finite loss in epoch " + std::to_string(epoch) + "; batch: " + ids);
      }

      std::vector<Tensor<T>> grads = std::move(results[0].grads);
      for (std::size_t b = 1; b < nb; ++b) {
        for (std::size_t p = 0; p < grads.size(); ++p) {
          auto dst = grads[p].data();
          auto src = results[b].grads[p].data();
          for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
      }
      sgd_step(params, grads, opt, lr);

      for (std::size_t b = 0; b < nb; ++b) {
        loss_sum += results[b].loss;
        const int y = data[order[start + b]].label;
        correct += rank_of(results[b].probabilities, static_cast<std::size_t>(y)) == 0;
      }
    }

    EpochStats s;
    s.epoch = epoch;
    s.lr = lr;
    s.train_loss = loss_sum / static_cast<double>(data.size());
    s.train_top1 = static_cast<double>(correct) / static_cast<double>(data.size());
    s.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(s);
    if (on_epoch) on_epoch(s, model, opt);
  }
  return log;
}

/// Class probabilities for every item, without augmentation.
template <class T>
std::vector<std::vector<double>> predict(const std::vector<LabeledImage>& data, const Model<T>& model,
                                         const ExperimentConfig& cfg) {
  std::vector<std::vector<double>> out(data.size());
  parallel_for(data.size(), cfg.train.worker_count(), [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(cfg.train.seed, 0xe7u, i);
    out[i] = run_item(model, cfg, data[i].image, data[i].label, false, 1.0, seed).probabilities;
  });
  return out;
}

template <class T>
EvalReport evaluate(const std::vector<LabeledImage>& data, const Model<T>& model, const ExperimentConfig& cfg) {
  if (data.empty()) throw Error("cannot evaluate an empty dataset");
  std::vector<int> labels;
  for (const auto& d : data) labels.push_back(d.label);
  return evaluate_predictions(predict(data, model, cfg), labels, model.config.num_classes);
}

/// Mean of per-item −log p_y (clamped at 1e-12).
inline double mean_cross_entropy(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels) {
  if (probabilities.empty() || probabilities.size() != labels.size()) throw Error("batch and label counts differ");
  double total = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& p = probabilities[i];
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= p.size()) throw Error("class index out of range");
    total += -std::log(std::max(p[static_cast<std::size_t>(labels[i])], 1e-12));
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace agnet
