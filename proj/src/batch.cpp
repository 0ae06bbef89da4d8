#include "gripstab/batch.hpp"

#include <algorithm>

namespace gripstab {

namespace {

std::vector<float> planar(const Raster& r) {
  const std::size_t hw = static_cast<std::size_t>(r.width) * r.height;
  std::vector<float> out(3 * hw);
  for (std::size_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c) out[c * hw + i] = r.data[i * 3 + c];
  return out;
}

}  // namespace

TensorDataset to_tensor_dataset(std::span<const DataPoint> points) {
  TensorDataset d;
  if (points.empty()) return d;
  d.width = points.front().images.left.width;
  d.height = points.front().images.left.height;
  for (const auto& p : points) {
    const auto& im = p.images;
    if (im.left.width != d.width || im.left.height != d.height || im.right.width != d.width ||
        im.right.height != d.height) {
      throw ShapeError("point '" + p.point_id + "' has images of a different resolution than the rest");
    }
    d.left.push_back(planar(im.left));
    d.right.push_back(planar(im.right));
    d.labels.push_back(p.label);
    d.ids.push_back(p.point_id);
    d.classes.push_back(p.config.object_id);
  }
  return d;
}

TensorDataset subset(const TensorDataset& data, std::span<const std::size_t> indices) {
  TensorDataset d;
  d.height = data.height;
  d.width = data.width;
  for (auto i : indices) {
    if (i >= data.size()) throw ValidationError("subset index out of range");
    d.left.push_back(data.left[i]);
    d.right.push_back(data.right[i]);
    d.labels.push_back(data.labels[i]);
    d.ids.push_back(data.ids[i]);
    d.classes.push_back(data.classes[i]);
  }
  return d;
}

template <typename T>
void make_batch(const TensorDataset& data, std::span<const std::size_t> indices, Tensor<T>& left, Tensor<T>& right) {
  const int n = static_cast<int>(indices.size());
  if (left.c != 3 || left.n != n || left.h != data.height || left.w != data.width) {
    left = Tensor<T>(3, n, data.height, data.width);
    right = Tensor<T>(3, n, data.height, data.width);
  }
  const std::size_t hw = static_cast<std::size_t>(data.height) * data.width;
  for (int k = 0; k < n; ++k) {
    const auto& l = data.left[indices[k]];
    const auto& r = data.right[indices[k]];
    for (int c = 0; c < 3; ++c) {
      std::copy(l.begin() + c * hw, l.begin() + (c + 1) * hw, left.data.begin() + (c * n + k) * hw);
      std::copy(r.begin() + c * hw, r.begin() + (c + 1) * hw, right.data.begin() + (c * n + k) * hw);
    }
  }
}

template void make_batch<float>(const TensorDataset&, std::span<const std::size_t>, Tensor<float>&, Tensor<float>&);
template void make_batch<double>(const TensorDataset&, std::span<const std::size_t>, Tensor<double>&,
                                 Tensor<double>&);

std::vector<double> predict(Network<float>& net, const TensorDataset& data, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(data.size());
  Tensor<float> left, right;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    make_batch(data, idx, left, right);
    const Tensor<float>* in[2] = {&left, &right};
    for (float y : net.forward(in, ForwardOptions{Mode::kEval})) out.push_back(y);
  }
  return out;
}

}  // namespace gripstab
