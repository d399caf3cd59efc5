// Copyright 2026 The Fedsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// On-disk datasets.
//
// CSV: header row; one column named "label" holding integer class indices,
// every other column a numeric feature. Features are a flat vector unless the
// caller supplies an image shape.
//
// IDX: big-endian pair of files. Images: magic 0x0000 <type> <ndim>, ndim
// u32 extents, payload. Labels: magic 0x00000801, u32 count, u8 labels.
// Supported payload types: 0x08 (u8, scaled to [0,1]), 0x0D (f32), 0x0E (f64).

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "fedsim/common/error.hpp"
#include "fedsim/data/dataset.hpp"

namespace fedsim {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    const auto first = cell.find_first_not_of(' ');
    out.push_back(first == std::string::npos ? std::string() : cell.substr(first));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line, const std::string& what) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end) {
    throw IoError("cannot parse " + what + " '" + s + "'", line);
  }
  return v;
}

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError("truncated IDX header in " + path + " at offset " +
                  std::to_string(static_cast<long long>(in.tellg())));
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) |
         (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

template <typename U>
U read_be(std::istream& in, const std::string& path, std::size_t offset) {
  unsigned char b[sizeof(U)];
  if (!in.read(reinterpret_cast<char*>(b), sizeof(U))) {
    throw IoError("truncated IDX payload in " + path + " at byte offset " +
                  std::to_string(offset));
  }
  std::reverse(b, b + sizeof(U));
  U v;
  std::memcpy(&v, b, sizeof(U));
  return v;
}

inline std::size_t infer_or_check_classes(const std::vector<std::size_t>& labels,
                                          std::size_t declared) {
  std::size_t max_label = 0;
  for (std::size_t l : labels) max_label = std::max(max_label, l);
  if (declared == 0) return std::max<std::size_t>(max_label + 1, 2);
  return declared;
}

}  // namespace detail

// num_classes == 0 infers max(label) + 1. A non-empty image_shape reshapes the
// feature columns (their count must match).
template <Real T>
Dataset<T> load_csv(const std::string& path, std::size_t num_classes = 0,
                    Split split = Split::kTrain, Shape image_shape = {}) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty CSV file " + path, 1);
  const auto header = detail::split_csv_line(line);
  const auto it = std::find(header.begin(), header.end(), "label");
  if (it == header.end()) throw IoError("CSV header has no 'label' column", 1);
  const std::size_t label_col = static_cast<std::size_t>(it - header.begin());
  const std::size_t n_features = header.size() - 1;
  if (n_features == 0) throw IoError("CSV has no feature columns", 1);
  Shape shape = image_shape.empty() ? Shape{n_features} : image_shape;
  if (shape_size(shape) != n_features) {
    throw IoError("image shape " + shape_string(shape) + " does not match " +
                  std::to_string(n_features) + " feature columns", 1);
  }

  std::vector<T> features;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw IoError("expected " + std::to_string(header.size()) + " columns, got " +
                    std::to_string(cells.size()), line_no);
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = detail::parse_double(cells[c], line_no,
                                            c == label_col ? "label" : "feature");
      if (c == label_col) {
        if (v < 0 || v != std::floor(v)) {
          throw ValidationError("label '" + cells[c] + "' on line " +
                                std::to_string(line_no) + " is not a class index");
        }
        labels.push_back(static_cast<std::size_t>(v));
      } else {
        features.push_back(static_cast<T>(v));
      }
    }
  }
  if (labels.empty()) throw IoError("CSV " + path + " has no data rows", line_no);
  const std::size_t classes = detail::infer_or_check_classes(labels, num_classes);
  Dataset<T> ds(shape, classes, split);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " on data row " +
                            std::to_string(i + 1) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    ds.add(std::span<const T>(features).subspan(i * n_features, n_features), labels[i]);
  }
  return ds;
}

// Writes full round-trip precision.
template <Real T>
void save_csv(const Dataset<T>& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << std::setprecision(std::numeric_limits<T>::max_digits10);
  for (std::size_t k = 0; k < ds.feature_size(); ++k) out << 'f' << k << ',';
  out << "label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (T v : ds.features(i)) out << v << ',';
    out << ds.label(i) << '\n';
  }
  if (!out) throw IoError("write failed for " + path);
}

template <Real T>
Dataset<T> load_idx(const std::string& images_path, const std::string& labels_path,
                    std::size_t num_classes = 0, Split split = Split::kTrain) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot open " + images_path);
  const std::uint32_t magic = detail::read_be32(img, images_path);
  if ((magic >> 16) != 0) throw IoError("bad IDX magic in " + images_path);
  const unsigned type = (magic >> 8) & 0xFF;
  const unsigned ndim = magic & 0xFF;
  if (ndim < 2 || ndim > 4) {
    throw IoError("IDX images need 2..4 dimensions, got " + std::to_string(ndim));
  }
  std::vector<std::size_t> dims(ndim);
  for (auto& d : dims) d = detail::read_be32(img, images_path);
  const std::size_t n = dims[0];
  Shape shape(dims.begin() + 1, dims.end());
  if (shape.size() == 2) shape.insert(shape.begin(), 1);  // HxW -> 1xHxW
  const std::size_t per = shape_size(shape);

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot open " + labels_path);
  if (detail::read_be32(lab, labels_path) != 0x00000801u) {
    throw IoError("bad IDX label magic in " + labels_path);
  }
  const std::size_t n_labels = detail::read_be32(lab, labels_path);
  if (n_labels != n) {
    throw IoError(labels_path + " holds " + std::to_string(n_labels) +
                  " labels for " + std::to_string(n) + " images");
  }
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = lab.get();
    if (c == EOF) {
      throw IoError("truncated IDX labels in " + labels_path + " at byte offset " +
                    std::to_string(8 + i));
    }
    labels[i] = static_cast<std::size_t>(c);
  }

  const std::size_t classes = detail::infer_or_check_classes(labels, num_classes);
  Dataset<T> ds(shape, classes, split);
  std::vector<T> x(per);
  std::size_t offset = 4 + 4 * ndim;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < per; ++k) {
      switch (type) {
        case 0x08: {
          const int c = img.get();
          if (c == EOF) {
            throw IoError("truncated IDX payload in " + images_path +
                          " at byte offset " + std::to_string(offset));
          }
          x[k] = static_cast<T>(c / 255.0);
          offset += 1;
          break;
        }
        case 0x0D:
          x[k] = static_cast<T>(detail::read_be<float>(img, images_path, offset));
          offset += 4;
          break;
        case 0x0E:
          x[k] = static_cast<T>(detail::read_be<double>(img, images_path, offset));
          offset += 8;
          break;
        default:
          throw IoError("unsupported IDX element type " + std::to_string(type));
      }
    }
    if (labels[i] >= classes) {
      throw ValidationError("label " + std::to_string(labels[i]) + " of example " +
                            std::to_string(i) + " out of range for " +
                            std::to_string(classes) + " classes");
    }
    ds.add(x, labels[i]);
  }
  return ds;
}

// Writes f64 payloads (exact round trip for both precisions).
template <Real T>
void save_idx(const Dataset<T>& ds, const std::string& images_path,
              const std::string& labels_path) {
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw IoError("cannot write " + images_path);
  Shape shape = ds.feature_shape();
  if (shape.size() == 3 && shape[0] == 1) shape.erase(shape.begin());
  detail::write_be32(img, 0x00000E00u | static_cast<std::uint32_t>(shape.size() + 1));
  detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t d : shape) detail::write_be32(img, static_cast<std::uint32_t>(d));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (T v : ds.features(i)) {
      const double dv = static_cast<double>(v);
      unsigned char b[8];
      std::memcpy(b, &dv, 8);
      std::reverse(b, b + 8);
      img.write(reinterpret_cast<const char*>(b), 8);
    }
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw IoError("cannot write " + labels_path);
  detail::write_be32(lab, 0x00000801u);
  detail::write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t l : ds.labels()) {
    if (l > 255) throw ValidationError("IDX labels are limited to 0..255");
    lab.put(static_cast<char>(l));
  }
  if (!img || !lab) throw IoError("write failed for " + images_path);
}

}  // namespace fedsim
