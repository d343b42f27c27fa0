#include "bteach/featstore.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bteach/error.hpp"
#include "csv.hpp"

namespace bteach {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(ErrorCode::Format, "unknown split '" + s + "' (expected train or test)");
}

FeatureStore::FeatureStore(std::size_t dim, std::vector<FeatureItem> items)
    : dim_(dim), items_(std::move(items)) {
  if (dim_ == 0) fail(ErrorCode::Format, "feature dimension must be positive");
  for (std::size_t i = 0; i < items_.size(); ++i) {
    const auto& it = items_[i];
    if (it.id.empty()) fail(ErrorCode::Format, "item " + std::to_string(i) + " has an empty id");
    if (it.category.empty()) fail(ErrorCode::Format, "item '" + it.id + "' has an empty category");
    if (it.vector.size() != dim_) {
      fail(ErrorCode::Format, "item '" + it.id + "' has " + std::to_string(it.vector.size()) +
                                  " features, expected " + std::to_string(dim_));
    }
    for (float v : it.vector) {
      if (!std::isfinite(v)) fail(ErrorCode::Numeric, "item '" + it.id + "' contains a non-finite feature value");
    }
    if (!by_id_.emplace(it.id, i).second) fail(ErrorCode::Format, "duplicate item id '" + it.id + "'");
    auto [pos, inserted] = categories_.try_emplace(it.category);
    if (inserted) category_order_.push_back(it.category);
    pos->second.push_back(i);
  }
}

bool FeatureStore::has_category(const std::string& category) const {
  return categories_.count(category) != 0;
}

const std::vector<std::size_t>& FeatureStore::category_indices(const std::string& category) const {
  auto it = categories_.find(category);
  if (it == categories_.end()) fail(ErrorCode::InvalidArgument, "unknown category '" + category + "'");
  return it->second;
}

std::optional<std::size_t> FeatureStore::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t FeatureStore::index_of(const std::string& id) const {
  auto found = find(id);
  if (!found) fail(ErrorCode::InvalidArgument, "unknown item id '" + id + "'");
  return *found;
}

std::vector<FeatureItem> category_view(const FeatureStore& store, const std::string& category) {
  std::vector<FeatureItem> out;
  for (std::size_t i : store.category_indices(category)) out.push_back(store.item(i));
  return out;
}

namespace {

float from_le(std::uint32_t bits) {
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
  }
  return std::bit_cast<float>(bits);
}

std::uint32_t to_le(float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  if constexpr (std::endian::native == std::endian::big) {
    bits = ((bits & 0xFF) << 24) | ((bits & 0xFF00) << 8) | ((bits >> 8) & 0xFF00) | (bits >> 24);
  }
  return bits;
}

}  // namespace

FeatureStore load_feature_store(const fs::path& dir) {
  const auto index_path = dir / "index.json";
  const auto payload_path = dir / "features.f32";
  if (!fs::exists(index_path)) fail(ErrorCode::Io, "missing index file " + index_path.string());
  if (!fs::exists(payload_path)) fail(ErrorCode::Io, "missing payload file " + payload_path.string());

  json index;
  {
    std::ifstream in(index_path);
    try {
      index = json::parse(in);
    } catch (const json::exception& e) {
      fail(ErrorCode::Format, "cannot parse " + index_path.string() + ": " + e.what());
    }
  }
  if (!index.contains("dim") || !index.contains("items") || !index["items"].is_array()) {
    fail(ErrorCode::Format, index_path.string() + " needs 'dim' and 'items'");
  }
  const auto dim_signed = index["dim"].get<long long>();
  if (dim_signed <= 0) fail(ErrorCode::Format, "index dim must be positive");
  const auto dim = static_cast<std::size_t>(dim_signed);
  const auto& entries = index["items"];

  const auto payload_bytes = fs::file_size(payload_path);
  const std::size_t row_bytes = dim * sizeof(float);
  if (payload_bytes % row_bytes != 0 || payload_bytes / row_bytes != entries.size()) {
    fail(ErrorCode::Format, "payload/index mismatch: " + std::to_string(payload_bytes) + " bytes for " +
                                std::to_string(entries.size()) + " items of dim " + std::to_string(dim));
  }

  std::ifstream payload(payload_path, std::ios::binary);
  std::vector<std::uint32_t> row(dim);
  std::vector<FeatureItem> items;
  items.reserve(entries.size());
  for (const auto& e : entries) {
    FeatureItem it;
    try {
      it.id = e.at("id").get<std::string>();
      it.category = e.at("category").get<std::string>();
      it.split = split_from_string(e.value("split", std::string("train")));
      if (e.contains("image_path") && !e["image_path"].is_null()) it.image_path = e["image_path"].get<std::string>();
    } catch (const json::exception& ex) {
      fail(ErrorCode::Format, "malformed index entry: " + std::string(ex.what()));
    }
    payload.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_bytes));
    if (!payload) fail(ErrorCode::Io, "short read in " + payload_path.string());
    it.vector.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) it.vector[k] = from_le(row[k]);
    items.push_back(std::move(it));
  }
  return FeatureStore(dim, std::move(items));
}

void write_feature_store(const FeatureStore& store, const fs::path& dir) {
  fs::create_directories(dir);
  json index;
  index["dim"] = store.dim();
  index["items"] = json::array();
  for (const auto& it : store.items()) {
    json e{{"id", it.id}, {"category", it.category}, {"split", to_string(it.split)}};
    if (it.image_path) e["image_path"] = *it.image_path;
    index["items"].push_back(std::move(e));
  }
  {
    std::ofstream out(dir / "index.json");
    if (!out) fail(ErrorCode::Io, "cannot write " + (dir / "index.json").string());
    out << index.dump(1) << '\n';
  }
  std::ofstream payload(dir / "features.f32", std::ios::binary);
  if (!payload) fail(ErrorCode::Io, "cannot write " + (dir / "features.f32").string());
  std::vector<std::uint32_t> row(store.dim());
  for (const auto& it : store.items()) {
    for (std::size_t k = 0; k < row.size(); ++k) row[k] = to_le(it.vector[k]);
    payload.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

FeatureStore import_feature_csv(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) fail(ErrorCode::Io, "cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Format, csv.string() + " is empty");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 4 || header[0] != "id" || header[1] != "category" || header[2] != "split") {
    fail(ErrorCode::Format, csv.string() + ": header must start with id,category,split");
  }
  // An image_path column may sit between split and the features.
  std::size_t first_feature = 3;
  const bool has_image = header[3] == "image_path";
  if (has_image) first_feature = 4;
  const std::size_t dim = header.size() - first_feature;
  for (std::size_t k = 0; k < dim; ++k) {
    if (header[first_feature + k] != "f" + std::to_string(k)) {
      fail(ErrorCode::Format, csv.string() + ": expected column f" + std::to_string(k) + ", got '" +
                                  header[first_feature + k] + "'");
    }
  }

  std::vector<FeatureItem> items;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) {
      fail(ErrorCode::Format, csv.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(header.size()) + " fields");
    }
    FeatureItem it;
    it.id = fields[0];
    it.category = fields[1];
    it.split = split_from_string(fields[2]);
    if (has_image && !fields[3].empty()) it.image_path = fields[3];
    it.vector.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& f = fields[first_feature + k];
      char* end = nullptr;
      it.vector[k] = std::strtof(f.c_str(), &end);
      if (end == f.c_str() || *end != '\0') {
        fail(ErrorCode::Format, csv.string() + ":" + std::to_string(line_no) + ": bad number '" + f + "'");
      }
    }
    items.push_back(std::move(it));
  }
  return FeatureStore(dim, std::move(items));
}

FeatureStore open_feature_store(const fs::path& path) {
  if (path.extension() == ".csv") return import_feature_csv(path);
  if (!fs::exists(path)) fail(ErrorCode::Io, "feature store not found: " + path.string());
  return load_feature_store(path);
}

}  // namespace bteach
