#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace bteach {

enum class Split { Train, Test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct FeatureItem {
  std::string id;
  std::string category;
  std::vector<float> vector;
  std::optional<std::string> image_path;
  Split split = Split::Train;
};

// Labeled feature vectors with a category index. Immutable once built; all
// orderings follow insertion (index-file) order.
class FeatureStore {
 public:
  FeatureStore() = default;

  // Validates and indexes items. Throws bteach::Error on duplicate ids,
  // dimension mismatch or non-finite values (naming the offending item).
  FeatureStore(std::size_t dim, std::vector<FeatureItem> items);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return items_.size(); }
  std::span<const FeatureItem> items() const noexcept { return items_; }
  const FeatureItem& item(std::size_t index) const { return items_.at(index); }

  // Categories in order of first appearance.
  const std::vector<std::string>& categories() const noexcept { return category_order_; }
  bool has_category(const std::string& category) const;
  const std::vector<std::size_t>& category_indices(const std::string& category) const;

  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;

 private:
  std::size_t dim_ = 0;
  std::vector<FeatureItem> items_;
  std::vector<std::string> category_order_;
  std::unordered_map<std::string, std::vector<std::size_t>> categories_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Items of one category in store order. Throws on unknown category.
std::vector<FeatureItem> category_view(const FeatureStore& store, const std::string& category);

// On-disk format: <dir>/index.json plus <dir>/features.f32 (little-endian
// float32, row-major, rows in index order).
FeatureStore load_feature_store(const std::filesystem::path& dir);
void write_feature_store(const FeatureStore& store, const std::filesystem::path& dir);

// CSV with header id,category,split,f0..f{dim-1}.
FeatureStore import_feature_csv(const std::filesystem::path& csv);

// Accepts either a store directory or a .csv file.
FeatureStore open_feature_store(const std::filesystem::path& path);

}  // namespace bteach
