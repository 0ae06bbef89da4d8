#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gripstab/core.hpp"
#include "gripstab/network.hpp"

namespace gripstab {

// Data points with images already converted to channel-first planes.
struct TensorDataset {
  int height = 0;
  int width = 0;
  std::vector<std::vector<float>> left;   // [3][H][W] per sample
  std::vector<std::vector<float>> right;
  std::vector<double> labels;
  std::vector<std::string> ids;
  std::vector<std::string> classes;

  std::size_t size() const { return labels.size(); }
};

TensorDataset to_tensor_dataset(std::span<const DataPoint> points);
TensorDataset subset(const TensorDataset& data, std::span<const std::size_t> indices);

// Gathers samples into [3][N][H][W] tensors.
template <typename T>
void make_batch(const TensorDataset& data, std::span<const std::size_t> indices, Tensor<T>& left, Tensor<T>& right);

// Evaluation-mode predictions, in dataset order.
std::vector<double> predict(Network<float>& net, const TensorDataset& data, std::size_t batch_size = 32);

}  // namespace gripstab
