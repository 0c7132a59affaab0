#pragma once

#include "aimguard/inspector.hpp"
#include "aimguard/simulator.hpp"

namespace fixture {

// Small labeled dataset and a detector trained on it in a few seconds.
struct Trained {
  aimguard::simulator::Dataset train;
  aimguard::simulator::Dataset val;
  aimguard::simulator::Dataset test;
  aimguard::inspector::DetectorBundle bundle;
};

inline aimguard::inspector::PipelineConfig quick_config(std::uint64_t seed = 1) {
  aimguard::inspector::PipelineConfig cfg;
  cfg.subsequence_architecture = aimguard::inspector::tiny_subsequence_architecture();
  cfg.subsequence_training.epochs = 3;
  cfg.subsequence_training.samples_per_epoch = 2048;
  cfg.subsequence_training.val_samples = 2048;
  cfg.aggregator_training.epochs = 30;
  cfg.aggregator_training.batch_size = 64;
  cfg.forest.n_trees = 30;
  cfg.background_size = 16;
  cfg.seed = seed;
  return cfg;
}

inline aimguard::simulator::Dataset quick_dataset(int matches, std::uint64_t seed, const std::string& prefix) {
  aimguard::simulator::DatasetConfig d;
  d.matches = matches;
  d.players = 10;
  d.cheater_frac = 0.2;
  d.seed = seed;
  d.match_prefix = prefix;
  return aimguard::simulator::gen_dataset(d);
}

inline const Trained& trained() {
  static const Trained t = [] {
    Trained out;
    out.train = quick_dataset(12, 101, "train-");
    out.val = quick_dataset(6, 102, "val-");
    out.test = quick_dataset(6, 103, "test-");
    out.bundle = aimguard::inspector::train_pipeline(out.train.matches, out.val.matches, quick_config());
    return out;
  }();
  return t;
}

}  // namespace fixture
