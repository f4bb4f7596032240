#pragma once

#include <span>
#include <string>
#include <vector>

namespace rhm::render {

struct Image {
  int height = 0, width = 0;
  std::vector<float> data;  // [3,H,W], values in [-1,1]
};

/// 8-bit RGB PNG; [-1,1] maps linearly onto [0,255].
void save_png(const std::string& path, std::span<const float> image, int height,
              int width);
Image load_png(const std::string& path);

}  // namespace rhm::render
