#pragma once

#include <filesystem>

#include "fuad/tensor.hpp"

namespace fuad {

// 8-bit RGB PNG. Values are clamped to [0,1] and rounded to k/255.
void write_png(const std::filesystem::path& path, const Tensor& pixels);
void write_gray_png(const std::filesystem::path& path, const Grid& grid, double lo, double hi);

// Any OpenCV-readable image as [3 x H x W] in [0,1], whatever the source depth
// or channel count.
Tensor read_image(const std::filesystem::path& path);
// Binarised (>0 -> 1) single-channel mask.
Grid read_mask(const std::filesystem::path& path);

// Resize to `resize` x `resize` then centre-crop to `crop` x `crop`.
Tensor resize_center_crop(const Tensor& image, int resize, int crop);
Grid resize_center_crop_mask(const Grid& mask, int resize, int crop);
int resize_size_for(int crop);

}  // namespace fuad
