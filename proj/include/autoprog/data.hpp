#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "autoprog/rng.hpp"
#include "autoprog/tensor.hpp"

namespace autoprog {

enum class DatasetKind { ClassificationBlobs, DiffusionTextures };

DatasetKind parse_dataset_kind(const std::string& text);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::ClassificationBlobs;
  std::size_t classes = 4;
  std::size_t side = 16;
  std::size_t channels = 1;
  std::size_t train_size = 2048;
  std::size_t eval_size = 512;
  // Rotates blob centres or blends textures toward an alternative set.
  double shift = 0.0;
  double pixel_noise = 0.3;
  // Blob position spread and ring radius in pixels.
  double position_std = 1.5;
  double radius = 4.0;
  double blob_width = 1.5;
};

struct Dataset {
  Tensor train_x;
  std::vector<std::size_t> train_y;
  Tensor eval_x;
  std::vector<std::size_t> eval_y;
  std::size_t classes = 0;
};

Dataset make_dataset(const DatasetSpec& spec, std::uint64_t seed);

// Rows of x at the given indices.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows);
std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& y, const std::vector<std::size_t>& rows);
// Batch drawn with replacement.
std::vector<std::size_t> sample_batch(std::size_t population, std::size_t batch, Rng rng);

}  // namespace autoprog
