#include "fuad/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "fuad/error.hpp"

namespace fuad {

namespace {

cv::Mat to_mat(const Tensor& t) {
  cv::Mat m(t.height(), t.width(), CV_64FC3);
  for (int y = 0; y < t.height(); ++y) {
    for (int x = 0; x < t.width(); ++x) {
      auto& px = m.at<cv::Vec3d>(y, x);
      // OpenCV stores BGR.
      for (int c = 0; c < 3; ++c) px[2 - c] = t.at(std::min(c, t.channels() - 1), y, x);
    }
  }
  return m;
}

// Divides by `full` per element (not by a reciprocal) so k/255 round-trips exactly.
Tensor from_mat(const cv::Mat& m64, double full = 1.0) {
  Tensor t({3, m64.rows, m64.cols});
  for (int y = 0; y < m64.rows; ++y) {
    for (int x = 0; x < m64.cols; ++x) {
      const auto& px = m64.at<cv::Vec3d>(y, x);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = std::clamp(px[2 - c] / full, 0.0, 1.0);
    }
  }
  return t;
}

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

void write_png(const std::filesystem::path& path, const Tensor& pixels) {
  ensure_parent(path);
  cv::Mat m = to_mat(pixels);
  cv::Mat out;
  m.convertTo(out, CV_8UC3, 255.0);
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write image: " + path.string());
}

void write_gray_png(const std::filesystem::path& path, const Grid& grid, double lo, double hi) {
  ensure_parent(path);
  cv::Mat out(grid.height, grid.width, CV_8UC1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const double v = std::clamp((grid.at(y, x) - lo) / span, 0.0, 1.0);
      out.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  }
  if (!cv::imwrite(path.string(), out)) throw Error("cannot write image: " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (raw.empty()) throw IngestionError("cannot read image: " + path.string());
  double full = 1.0;
  switch (raw.depth()) {
    case CV_8U: full = 255.0; break;
    case CV_16U: full = 65535.0; break;
    case CV_32F:
    case CV_64F: break;
    default: throw IngestionError("unsupported pixel depth: " + path.string());
  }
  cv::Mat colour;
  switch (raw.channels()) {
    case 1: cv::cvtColor(raw, colour, cv::COLOR_GRAY2BGR); break;
    case 3: colour = raw; break;
    case 4: cv::cvtColor(raw, colour, cv::COLOR_BGRA2BGR); break;
    default: throw IngestionError("unsupported channel count: " + path.string());
  }
  cv::Mat m64;
  colour.convertTo(m64, CV_64FC3);
  return from_mat(m64, full);
}

Grid read_mask(const std::filesystem::path& path) {
  cv::Mat raw = cv::imread(path.string(), cv::IMREAD_GRAYSCALE | cv::IMREAD_ANYDEPTH);
  if (raw.empty()) throw IngestionError("cannot read mask: " + path.string());
  cv::Mat m64;
  raw.convertTo(m64, CV_64F);
  Grid g(m64.rows, m64.cols);
  for (int y = 0; y < m64.rows; ++y) {
    for (int x = 0; x < m64.cols; ++x) g.at(y, x) = m64.at<double>(y, x) > 0.0 ? 1.0 : 0.0;
  }
  return g;
}

int resize_size_for(int crop) { return static_cast<int>(std::lround(crop * 256.0 / 224.0)); }

Tensor resize_center_crop(const Tensor& image, int resize, int crop) {
  if (crop > resize) throw ConfigError("crop size exceeds resize size");
  cv::Mat src = to_mat(image);
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(resize, resize), 0, 0, cv::INTER_LINEAR);
  const int off = (resize - crop) / 2;
  return from_mat(dst(cv::Rect(off, off, crop, crop)).clone());
}

Grid resize_center_crop_mask(const Grid& mask, int resize, int crop) {
  if (crop > resize) throw ConfigError("crop size exceeds resize size");
  cv::Mat src(mask.height, mask.width, CV_64F);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) src.at<double>(y, x) = mask.at(y, x);
  }
  cv::Mat dst;
  cv::resize(src, dst, cv::Size(resize, resize), 0, 0, cv::INTER_NEAREST);
  const int off = (resize - crop) / 2;
  Grid g(crop, crop);
  for (int y = 0; y < crop; ++y) {
    for (int x = 0; x < crop; ++x) g.at(y, x) = dst.at<double>(y + off, x + off) > 0.0 ? 1.0 : 0.0;
  }
  return g;
}

}  // namespace fuad
