#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dr2/image.hpp"

namespace dr2 {

namespace fs = std::filesystem;

inline cv::Mat to_cv_bgr(const ImageTensor& img) {
  cv::Mat mat(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int c = img.channels;
      auto& px = mat.at<cv::Vec3b>(y, x);
      // RGB tensor -> BGR mat; grayscale replicates.
      px[2] = value_to_u8(img.at(y, x, 0));
      px[1] = value_to_u8(img.at(y, x, c > 1 ? 1 : 0));
      px[0] = value_to_u8(img.at(y, x, c > 2 ? 2 : 0));
    }
  return mat;
}

inline ImageTensor from_cv_bgr(const cv::Mat& mat) {
  if (mat.empty()) throw std::runtime_error("from_cv_bgr: empty image");
  cv::Mat bgr;
  if (mat.channels() == 3)
    bgr = mat;
  else
    cv::cvtColor(mat, bgr, cv::COLOR_GRAY2BGR);
  ImageTensor img(bgr.rows, bgr.cols, 3);
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const auto& px = bgr.at<cv::Vec3b>(y, x);
      img.at(y, x, 0) = u8_to_value(px[2]);
      img.at(y, x, 1) = u8_to_value(px[1]);
      img.at(y, x, 2) = u8_to_value(px[0]);
    }
  return img;
}

inline ImageTensor read_image(const std::string& path) {
  if (!fs::exists(path))
    throw std::runtime_error("image not found: " + path);
  cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
  if (mat.empty()) throw std::runtime_error("cannot decode image: " + path);
  return from_cv_bgr(mat);
}

inline void write_png(const std::string& path, const ImageTensor& img) {
  if (!cv::imwrite(path, to_cv_bgr(img)))
    throw std::runtime_error("cannot write image: " + path);
}

inline std::vector<unsigned char> encode_jpeg(const ImageTensor& img,
                                              int quality) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".jpg", to_cv_bgr(img), buf,
                    {cv::IMWRITE_JPEG_QUALITY, quality}))
    throw std::runtime_error("JPEG encoding failed");
  return buf;
}

inline ImageTensor decode_jpeg(const std::vector<unsigned char>& bytes) {
  cv::Mat mat = cv::imdecode(bytes, cv::IMREAD_COLOR);
  if (mat.empty()) throw std::runtime_error("JPEG decoding failed");
  return from_cv_bgr(mat);
}

inline void write_bytes(const std::string& path,
                        const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return bytes;
}

// Image files in a directory, sorted by filename for stable ordering.
inline std::vector<fs::path> list_images(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw std::runtime_error("not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Minimal CSV (no quoting; generated filenames contain no commas).

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  for (std::size_t i = 0; i < header.size(); ++i)
    out << header[i] << (i + 1 < header.size() ? "," : "\n");
  for (const auto& row : rows)
    for (std::size_t i = 0; i < row.size(); ++i)
      out << row[i] << (i + 1 < row.size() ? "," : "\n");
}

inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read csv: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace dr2
