#include "spsr/image_io.hpp"

#include "spsr/error.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace spsr {

torch::Tensor read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0).contiguous();
}

void write_image(const std::filesystem::path& path, const torch::Tensor& img) {
  auto t = img.detach().to(torch::kCPU);
  if (t.dim() == 4 && t.size(0) == 1) t = t[0];
  if (t.dim() != 3 || (t.size(0) != 1 && t.size(0) != 3)) {
    throw ShapeError("write_image: expected [1|3, H, W], got " + torch::str(img.sizes()));
  }
  auto bytes = t.to(torch::kFloat64).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
  bytes = bytes.permute({1, 2, 0}).contiguous();
  const int rows = static_cast<int>(bytes.size(0)), cols = static_cast<int>(bytes.size(1));
  cv::Mat out;
  if (bytes.size(2) == 3) {
    cv::Mat rgb(rows, cols, CV_8UC3, bytes.data_ptr<uint8_t>());
    cv::cvtColor(rgb, out, cv::COLOR_RGB2BGR);
  } else {
    out = cv::Mat(rows, cols, CV_8UC1, bytes.data_ptr<uint8_t>()).clone();
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write image: " + path.string());
}

}  // namespace spsr
