#pragma once

/// @file dataset.hpp
/// In-memory annotated dataset: images with their sizes, instances, categories.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isn/core.hpp"

namespace isn {

struct ImageInfo {
  std::int64_t id = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::string file_name;
};

struct Category {
  std::int64_t id = 0;
  std::string name;
};

struct Dataset {
  std::vector<ImageInfo> images;
  std::vector<Instance> instances;
  std::vector<Category> categories;

  std::vector<std::int64_t> category_ids() const {
    std::vector<std::int64_t> ids;
    ids.reserve(categories.size());
    for (const auto& c : categories) ids.push_back(c.id);
    return ids;
  }

  std::map<std::int64_t, ImageSize> image_sizes() const {
    std::map<std::int64_t, ImageSize> sizes;
    for (const auto& im : images) sizes[im.id] = {im.height, im.width};
    return sizes;
  }

  std::map<std::int64_t, std::vector<Instance>> instances_by_image() const {
    std::map<std::int64_t, std::vector<Instance>> out;
    for (const auto& im : images) out[im.id];
    for (const auto& inst : instances) out[inst.image_id].push_back(inst);
    return out;
  }
};

}  // namespace isn
