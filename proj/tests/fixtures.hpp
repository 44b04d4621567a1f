#pragma once

#include "agnet/synthetic.hpp"
#include "agnet/training/trainer.hpp"

namespace agnet::testing {

/// Small enough to train for a couple of epochs inside a unit test.
inline ExperimentConfig small_experiment(std::uint64_t seed = 1) {
  ExperimentConfig cfg;
  cfg.train.kappa = 2;
  cfg.train.image_size = 64;
  cfg.train.lr = 1e-3;
  cfg.train.epochs = 2;
  cfg.train.batch_size = 4;
  cfg.train.seed = seed;
  cfg.train.workers = 1;
  cfg.model.stage_channels = {8, 8, 8, 8};
  cfg.model.channels = 8;
  return cfg;
}

inline SyntheticSplit small_dataset(std::uint64_t seed = 1, int per_class = 4) {
  SyntheticConfig sc;
  sc.per_class = per_class;
  sc.seed = seed;
  return generate_synthetic(sc);
}

}  // namespace agnet::testing
