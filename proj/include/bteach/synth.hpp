#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "bteach/classifier.hpp"
#include "bteach/featstore.hpp"
#include "bteach/image.hpp"
#include "bteach/trialgen.hpp"

namespace bteach {

// Synthetic desk-scale experiment: PLDA-distributed features with planted
// confusions, matching images, and a toy classifier that recognises them.
//
// Category i (of C) has round(max_error_rate * i / (C - 1) * n) mispredicted
// items. Those are predicted as the mirror category C - 1 - i (70%) or as
// (i + 2) mod C, and their features and images sit part-way towards the
// predicted category.
struct SynthOptions {
  std::size_t n_categories = 100;
  std::size_t items_per_category = 20;
  std::size_t dim = 8;
  double psi = 1.0;         // between-class variance of latent class centres
  double noise = 1.0;       // within-class standard deviation
  double confusion_shift = 0.65;
  double max_error_rate = 0.6;
  int image_size = 32;      // 0 disables images and the classifier
  std::uint64_t seed = 1;
};

struct SynthFixture {
  FeatureStore store;
  std::vector<Prediction> predictions;
  std::vector<Image> images;  // parallel to store items
  std::vector<ToyLinearClassifier> classifier;  // zero or one
};

SynthFixture make_synthetic_fixture(const SynthOptions& options);

// Writes store/, predictions.csv, images/, classifier.json and a runnable
// config.json into dir.
void write_synthetic_fixture(const SynthFixture& fixture, const std::filesystem::path& dir, std::uint64_t seed);

}  // namespace bteach
