#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gripstab/models.hpp"

namespace gripstab {

// Batch tensor stored channel-major: [C][N][H][W]. Dense activations use
// h = w = 1, i.e. [features][N].
template <typename T>
struct Tensor {
  int c = 0;
  int n = 0;
  int h = 0;
  int w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int c_, int n_, int h_, int w_)
      : c(c_), n(n_), h(h_), w(w_), data(static_cast<std::size_t>(c_) * n_ * h_ * w_, T(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(n) * h * w; }
  std::size_t size() const { return data.size(); }
  T* channel(int ch) { return data.data() + ch * plane(); }
  const T* channel(int ch) const { return data.data() + ch * plane(); }
};

enum class Mode { kTrain, kEval };

struct ForwardOptions {
  Mode mode = Mode::kEval;
  std::uint64_t dropout_seed = 0;
  // Train mode only: fold batch statistics into the running buffers.
  bool update_statistics = true;
};

// Executes a ModelSpec. Parameters of every node live in one flat vector;
// nodes with the same param_key map to the same slice.
//   conv:       weights [F][C*k*k], bias [F]
//   batch_norm: gamma [C], beta [C]; buffers running mean [C], running var [C]
//   dense:      weights [O][I], bias [O]
template <typename T>
class Network {
 public:
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  std::span<T> parameters() { return params_; }
  std::span<const T> parameters() const { return params_; }
  std::span<T> gradients() { return grads_; }
  std::span<const T> gradients() const { return grads_; }
  std::span<T> buffers() { return buffers_; }
  std::span<const T> buffers() const { return buffers_; }

  // He-normal weights, zero biases, unit gamma, fresh running statistics.
  void initialize(std::uint64_t seed);

  std::size_t parameter_offset(const std::string& node) const;

  // One tensor per spec input, each [channels][N][height][width]. Returns one
  // output per sample.
  std::vector<T> forward(std::span<const Tensor<T>* const> inputs, const ForwardOptions& opts);

  // Gradient of the loss with respect to each output of the latest forward
  // call. Overwrites gradients().
  void backward(std::span<const T> d_output);

 private:
  struct Op {
    LayerSpec layer;
    bool has_params = false;
    std::vector<int> in;  // slot ids; slots [0, n_inputs) are external
    Shape out;
    std::vector<Shape> in_shapes;
    std::size_t param = 0;
    std::size_t param_size = 0;
    std::size_t buffer = 0;
  };

  const Tensor<T>& value(int slot) const;
  Tensor<T>& grad_slot(int slot);

  void forward_op(std::size_t i, const ForwardOptions& opts);
  void backward_op(std::size_t i);

  ModelSpec spec_;
  std::vector<Op> ops_;
  int n_external_ = 0;
  int output_slot_ = 0;
  std::unordered_map<std::string, std::size_t> node_param_;
  std::vector<T> params_;
  std::vector<T> grads_;
  std::vector<T> buffers_;

  // Per-forward state.
  Mode mode_ = Mode::kEval;
  int batch_ = 0;
  std::vector<const Tensor<T>*> external_;
  std::vector<Tensor<T>> values_;
  std::vector<Tensor<T>> dvalues_;
  std::vector<std::vector<T>> bn_mean_;
  std::vector<std::vector<T>> bn_inv_std_;
  std::vector<std::vector<std::int32_t>> argmax_;
  std::vector<std::vector<T>> mask_;
  std::vector<T> col_;
  std::vector<T> dcol_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace gripstab
