#include "bteach/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

#include "bteach/error.hpp"
#include "bteach/seed.hpp"

namespace bteach {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string category_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%03zu", i);
  return buf;
}

constexpr int kCells = 4;  // prototype images are kCells x kCells colour blocks

}  // namespace

SynthFixture make_synthetic_fixture(const SynthOptions& o) {
  if (o.n_categories < 3 || o.items_per_category < 3 || o.dim == 0) {
    fail(ErrorCode::InvalidArgument, "synthetic fixture needs >= 3 categories, >= 3 items each, dim > 0");
  }
  const std::size_t c_count = o.n_categories;
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.15, 0.85);

  std::vector<std::vector<double>> centres(c_count, std::vector<double>(o.dim));
  for (auto& c : centres)
    for (auto& v : c) v = std::sqrt(o.psi) * normal(rng);

  // Per-category colour blocks, kCells x kCells x 3.
  std::vector<std::vector<double>> protos(c_count, std::vector<double>(kCells * kCells * 3));
  for (auto& p : protos)
    for (auto& v : p) v = unit(rng);

  std::vector<FeatureItem> items;
  SynthFixture fx;
  for (std::size_t i = 0; i < c_count; ++i) {
    const auto n = o.items_per_category;
    const double rate = o.max_error_rate * static_cast<double>(i) / static_cast<double>(c_count - 1);
    const auto n_wrong = static_cast<std::size_t>(std::lround(rate * static_cast<double>(n)));
    const std::size_t n_primary = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(n_wrong)));
    for (std::size_t k = 0; k < n; ++k) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_i%02zu", category_name(i).c_str(), k);
      std::size_t predicted = i;
      if (k >= n - n_wrong) {
        const std::size_t w = k - (n - n_wrong);
        predicted = w < n_primary ? c_count - 1 - i : (i + 2) % c_count;
        if (predicted == i) predicted = (i + 1) % c_count;
      }
      const double shift = predicted == i ? 0.0 : o.confusion_shift;

      FeatureItem it;
      it.id = id;
      it.category = category_name(i);
      it.split = Split::Train;
      it.vector.resize(o.dim);
      for (std::size_t d = 0; d < o.dim; ++d) {
        const double centre = (1 - shift) * centres[i][d] + shift * centres[predicted][d];
        it.vector[d] = static_cast<float>(centre + o.noise * normal(rng));
      }
      if (o.image_size > 0) {
        it.image_path = "images/" + it.id + ".png";
        Image img(o.image_size, o.image_size);
        for (int y = 0; y < o.image_size; ++y) {
          for (int x = 0; x < o.image_size; ++x) {
            const int cell = (y * kCells / o.image_size) * kCells + (x * kCells / o.image_size);
            for (int ch = 0; ch < 3; ++ch) {
              const auto f = static_cast<std::size_t>(cell * 3 + ch);
              const double v = (1 - shift) * protos[i][f] + shift * protos[predicted][f] + 0.05 * normal(rng);
              img.at(x, y, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
          }
        }
        fx.images.push_back(std::move(img));
      }
      fx.predictions.push_back({it.id, it.category, category_name(predicted)});
      items.push_back(std::move(it));
    }
  }
  fx.store = FeatureStore(o.dim, std::move(items));

  if (o.image_size > 0) {
    // Template matching on the pooled colour blocks.
    std::vector<double> mean(kCells * kCells * 3, 0.0);
    for (const auto& p : protos)
      for (std::size_t f = 0; f < mean.size(); ++f) mean[f] += p[f] / static_cast<double>(c_count);
    std::vector<std::string> labels;
    std::vector<std::vector<double>> weights;
    std::vector<double> bias;
    for (std::size_t i = 0; i < c_count; ++i) {
      labels.push_back(category_name(i));
      std::vector<double> w(mean.size());
      double b = 0;
      for (std::size_t f = 0; f < w.size(); ++f) {
        w[f] = 12.0 * (protos[i][f] - mean[f]);
        b -= 0.5 * w[f] * (protos[i][f] + mean[f]);
      }
      weights.push_back(std::move(w));
      bias.push_back(b);
    }
    fx.classifier.emplace_back(std::move(labels), kCells, std::move(weights), std::move(bias));
  }
  return fx;
}

void write_synthetic_fixture(const SynthFixture& fx, const fs::path& dir, std::uint64_t seed) {
  fs::create_directories(dir);
  write_feature_store(fx.store, dir / "store");
  write_predictions_csv(dir / "predictions.csv", fx.predictions);
  for (std::size_t i = 0; i < fx.images.size(); ++i) {
    const auto& item = fx.store.item(i);
    if (item.image_path) write_png(dir / *item.image_path, fx.images[i]);
  }
  json config;
  config["seed"] = seed;
  config["paths"] = {{"feature_store", "store"}, {"predictions", "predictions.csv"}, {"output_dir", "out"}};
  if (!fx.images.empty()) config["paths"]["image_root"] = ".";
  config["teach"] = {{"k", 1000}};
  config["trialgen"] = {{"examples", "helpful"}, {"map", fx.images.empty() ? "none" : "blur"}};
  if (!fx.classifier.empty()) {
    fx.classifier.front().save(dir / "classifier.json");
    // Reduced grid keeps desk runs fast; length scale follows the 224 -> 64 ratio.
    config["saliency"] = {{"width", 64}, {"height", 64}, {"length_scale", 6.4}, {"n_masks", 200},
                          {"classifier", {{"kind", "toy"}, {"path", "classifier.json"}}}};
  }
  json conditions = json::object();
  for (const auto& c : all_conditions()) {
    if (c.examples == ExamplesMode::Helpful && c.map == MapMode::Blur) conditions[c.key()] = 1.0;
  }
  config["serve"] = {{"host", "127.0.0.1"}, {"port", 8080}, {"conditions", conditions}};
  std::ofstream out(dir / "config.json");
  if (!out) fail(ErrorCode::Io, "cannot write " + (dir / "config.json").string());
  out << config.dump(2) << '\n';
}

}  // namespace bteach
