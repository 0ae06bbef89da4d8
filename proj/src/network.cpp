#include "gripstab/network.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gripstab/rng.hpp"

namespace gripstab {

namespace {

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda, const float* b, int ldb,
          float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda, const double* b, int ldb,
          double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda,
              b, ldb, beta, c, ldc);
}

// TensorFlow-style "same" padding: output = ceil(in / stride).
struct Padding {
  int out;
  int before;
};
Padding same_padding(int in, int kernel, int stride) {
  const int out = (in + stride - 1) / stride;
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return {out, total / 2};
}

struct ConvGeom {
  int c, n, h, w, k, s, ho, wo, pt, pl;
  std::size_t rows() const { return static_cast<std::size_t>(c) * k * k; }
  std::size_t cols() const { return static_cast<std::size_t>(n) * ho * wo; }
  bool identity() const { return k == 1 && s == 1; }
};

template <typename T>
void im2col(const T* in, const ConvGeom& g, T* col) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        T* dst = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * P;
        for (int n = 0; n < g.n; ++n) {
          const T* src = in + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            T* d = dst + (static_cast<std::size_t>(n) * g.ho + oy) * g.wo;
            const int iy = oy * g.s - g.pt + ky;
            if (iy < 0 || iy >= g.h) {
              std::fill(d, d + g.wo, T(0));
              continue;
            }
            const T* srow = src + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.s - g.pl + kx;
              d[ox] = (ix >= 0 && ix < g.w) ? srow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* out) {
  const std::size_t P = g.cols();
  for (int c = 0; c < g.c; ++c) {
    for (int ky = 0; ky < g.k; ++ky) {
      for (int kx = 0; kx < g.k; ++kx) {
        const T* src = col + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * P;
        for (int n = 0; n < g.n; ++n) {
          T* dst = out + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy * g.s - g.pt + ky;
            if (iy < 0 || iy >= g.h) continue;
            const T* s = src + (static_cast<std::size_t>(n) * g.ho + oy) * g.wo;
            T* drow = dst + static_cast<std::size_t>(iy) * g.w;
            for (int ox = 0; ox < g.wo; ++ox) {
              const int ix = ox * g.s - g.pl + kx;
              if (ix >= 0 && ix < g.w) drow[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

template <typename T>
ConvGeom conv_geom(const Tensor<T>& in, int k, int s) {
  const auto py = same_padding(in.h, k, s);
  const auto px = same_padding(in.w, k, s);
  return {in.c, in.n, in.h, in.w, k, s, py.out, px.out, py.before, px.before};
}

}  // namespace

template <typename T>
Network<T>::Network(ModelSpec spec) : spec_(std::move(spec)) {
  const auto rows = check_shapes(spec_);
  n_external_ = static_cast<int>(spec_.inputs.size());
  std::unordered_map<std::string, int> slot;
  for (int i = 0; i < n_external_; ++i) slot[spec_.inputs[i]] = i;

  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> key_offsets;  // key -> (param, buffer)
  std::size_t n_params = 0, n_buffers = 0;
  ops_.resize(spec_.nodes.size());
  for (std::size_t i = 0; i < spec_.nodes.size(); ++i) {
    const Node& node = spec_.nodes[i];
    Op& op = ops_[i];
    op.layer = node.layer;
    op.has_params = !node.param_key.empty();
    for (const auto& src : node.inputs) op.in.push_back(slot.at(src));
    op.out = rows[i].output;
    op.in_shapes = rows[i].inputs;
    op.param_size = rows[i].trainable;
    if (!node.param_key.empty()) {
      auto [it, fresh] = key_offsets.try_emplace(node.param_key, n_params, n_buffers);
      if (fresh) {
        n_params += rows[i].trainable;
        n_buffers += rows[i].buffers;
      }
      op.param = it->second.first;
      op.buffer = it->second.second;
      node_param_[node.name] = op.param;
    }
    slot[node.name] = n_external_ + static_cast<int>(i);
  }
  output_slot_ = slot.at(spec_.output);
  params_.assign(n_params, T(0));
  grads_.assign(n_params, T(0));
  buffers_.assign(n_buffers, T(0));
  values_.resize(ops_.size());
  dvalues_.resize(ops_.size());
  bn_mean_.resize(ops_.size());
  bn_inv_std_.resize(ops_.size());
  argmax_.resize(ops_.size());
  mask_.resize(ops_.size());
  initialize(0);
}

template <typename T>
void Network<T>::initialize(std::uint64_t seed) {
  std::unordered_map<std::size_t, bool> done;
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    const Op& op = ops_[i];
    const LayerSpec& L = op.layer;
    if (!op.has_params || done[op.param]) continue;
    done[op.param] = true;
    T* p = params_.data() + op.param;
    Rng rng(derive_seed(seed, {tag(Stream::kInit), op.param}));
    if (L.kind == LayerKind::kConv || L.kind == LayerKind::kDense) {
      const std::size_t outs = L.kind == LayerKind::kConv ? L.filters : L.units;
      const std::size_t fan_in = op.param_size / outs - 1;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
      for (std::size_t j = 0; j < outs * fan_in; ++j) p[j] = static_cast<T>(dist(rng));
      std::fill(p + outs * fan_in, p + op.param_size, T(0));
    } else if (L.kind == LayerKind::kBatchNorm) {
      const int c = op.out.c;
      std::fill(p, p + c, T(1));
      std::fill(p + c, p + 2 * c, T(0));
      T* b = buffers_.data() + op.buffer;
      std::fill(b, b + c, T(0));
      std::fill(b + c, b + 2 * c, T(1));
    }
  }
}

template <typename T>
std::size_t Network<T>::parameter_offset(const std::string& node) const {
  auto it = node_param_.find(node);
  if (it == node_param_.end()) throw ValidationError("node '" + node + "' has no parameters");
  return it->second;
}

template <typename T>
const Tensor<T>& Network<T>::value(int slot) const {
  return slot < n_external_ ? *external_[slot] : values_[slot - n_external_];
}

template <typename T>
Tensor<T>& Network<T>::grad_slot(int slot) {
  auto& g = dvalues_[slot - n_external_];
  if (g.data.empty()) {
    const Tensor<T>& v = values_[slot - n_external_];
    g = Tensor<T>(v.c, v.n, v.h, v.w);
  }
  return g;
}

template <typename T>
std::vector<T> Network<T>::forward(std::span<const Tensor<T>* const> inputs, const ForwardOptions& opts) {
  if (static_cast<int>(inputs.size()) != n_external_) {
    throw ShapeError("model '" + spec_.name + "' expects " + std::to_string(n_external_) + " inputs, got " +
                     std::to_string(inputs.size()));
  }
  batch_ = inputs[0]->n;
  if (batch_ < 1) throw ShapeError("empty batch");
  for (const auto* t : inputs) {
    if (t->c != spec_.channels || t->h != spec_.height || t->w != spec_.width || t->n != batch_) {
      throw ShapeError("input tensor (" + std::to_string(t->c) + "," + std::to_string(t->h) + "," +
                       std::to_string(t->w) + ") x " + std::to_string(t->n) + " does not match model input (" +
                       std::to_string(spec_.channels) + "," + std::to_string(spec_.height) + "," +
                       std::to_string(spec_.width) + ")");
    }
  }
  external_.assign(inputs.begin(), inputs.end());
  mode_ = opts.mode;
  for (auto& g : dvalues_) g = Tensor<T>();
  for (std::size_t i = 0; i < ops_.size(); ++i) forward_op(i, opts);
  const Tensor<T>& out = value(output_slot_);
  return std::vector<T>(out.data.begin(), out.data.end());
}

template <typename T>
void Network<T>::forward_op(std::size_t i, const ForwardOptions& opts) {
  const Op& op = ops_[i];
  const LayerSpec& L = op.layer;
  const Tensor<T>& x = value(op.in[0]);
  Tensor<T>& y = values_[i];
  if (y.c != op.out.c || y.n != batch_ || y.h != op.out.h || y.w != op.out.w) {
    y = Tensor<T>(op.out.c, batch_, op.out.h, op.out.w);
  }
  const T* p = params_.data() + op.param;

  switch (L.kind) {
    case LayerKind::kConv: {
      const ConvGeom g = conv_geom(x, L.kernel, L.stride);
      const T* col = x.data.data();
      if (!g.identity()) {
        col_.resize(g.rows() * g.cols());
        im2col(x.data.data(), g, col_.data());
        col = col_.data();
      }
      const int F = L.filters;
      const int P = static_cast<int>(g.cols());
      const int K = static_cast<int>(g.rows());
      gemm(false, false, F, P, K, T(1), p, K, col, P, T(0), y.data.data(), P);
      const T* bias = p + static_cast<std::size_t>(F) * K;
      for (int f = 0; f < F; ++f) {
        T* row = y.channel(f);
        const T b = bias[f];
        for (int j = 0; j < P; ++j) row[j] += b;
      }
      break;
    }
    case LayerKind::kBatchNorm: {
      const int C = x.c;
      const std::size_t M = x.plane();
      const T* gamma = p;
      const T* beta = p + C;
      T* running = buffers_.data() + op.buffer;
      auto& mean = bn_mean_[i];
      auto& inv = bn_inv_std_[i];
      mean.resize(C);
      inv.resize(C);
      const bool train = opts.mode == Mode::kTrain;
      const double eps = L.epsilon;
      for (int c = 0; c < C; ++c) {
        const T* xc = x.channel(c);
        double m, var;
        if (train) {
          double s = 0;
          for (std::size_t j = 0; j < M; ++j) s += xc[j];
          m = s / static_cast<double>(M);
          double ss = 0;
          for (std::size_t j = 0; j < M; ++j) {
            const double d = xc[j] - m;
            ss += d * d;
          }
          var = ss / static_cast<double>(M);
          if (opts.update_statistics) {
            const double unbiased = M > 1 ? ss / static_cast<double>(M - 1) : var;
            running[c] = static_cast<T>(L.momentum * running[c] + (1.0 - L.momentum) * m);
            running[C + c] = static_cast<T>(L.momentum * running[C + c] + (1.0 - L.momentum) * unbiased);
          }
        } else {
          m = running[c];
          var = running[C + c];
        }
        mean[c] = static_cast<T>(m);
        inv[c] = static_cast<T>(1.0 / std::sqrt(var + eps));
        const T a = gamma[c] * inv[c];
        const T b = beta[c] - a * mean[c];
        T* yc = y.channel(c);
        for (std::size_t j = 0; j < M; ++j) yc[j] = a * xc[j] + b;
      }
      break;
    }
    case LayerKind::kRelu:
      for (std::size_t j = 0; j < x.size(); ++j) y.data[j] = x.data[j] > T(0) ? x.data[j] : T(0);
      break;
    case LayerKind::kSigmoid:
      for (std::size_t j = 0; j < x.size(); ++j) y.data[j] = T(1) / (T(1) + std::exp(-x.data[j]));
      break;
    case LayerKind::kDropout: {
      if (opts.mode == Mode::kEval) {
        y.data = x.data;
        break;
      }
      auto& mask = mask_[i];
      mask.resize(x.size());
      Rng rng(derive_seed(opts.dropout_seed, {tag(Stream::kDropout), i}));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const T scale = static_cast<T>(1.0 / (1.0 - L.rate));
      for (std::size_t j = 0; j < x.size(); ++j) {
        mask[j] = u(rng) >= L.rate ? scale : T(0);
        y.data[j] = x.data[j] * mask[j];
      }
      break;
    }
    case LayerKind::kMaxPool: {
      const auto py = same_padding(x.h, L.kernel, L.stride);
      const auto px = same_padding(x.w, L.kernel, L.stride);
      auto& arg = argmax_[i];
      arg.resize(y.size());
      for (int c = 0; c < x.c; ++c) {
        const T* xc = x.channel(c);
        for (int n = 0; n < batch_; ++n) {
          const std::size_t in_base = static_cast<std::size_t>(n) * x.h * x.w;
          const std::size_t out_base = (static_cast<std::size_t>(c) * batch_ + n) * y.h * y.w;
          for (int oy = 0; oy < y.h; ++oy) {
            for (int ox = 0; ox < y.w; ++ox) {
              T best = -std::numeric_limits<T>::infinity();
              std::int32_t at = -1;
              for (int ky = 0; ky < L.kernel; ++ky) {
                const int iy = oy * L.stride - py.before + ky;
                if (iy < 0 || iy >= x.h) continue;
                for (int kx = 0; kx < L.kernel; ++kx) {
                  const int ix = ox * L.stride - px.before + kx;
                  if (ix < 0 || ix >= x.w) continue;
                  const std::size_t idx = in_base + static_cast<std::size_t>(iy) * x.w + ix;
                  if (at < 0 || xc[idx] > best) {
                    best = xc[idx];
                    at = static_cast<std::int32_t>(idx);
                  }
                }
              }
              const std::size_t o = out_base + static_cast<std::size_t>(oy) * y.w + ox;
              y.data[o] = best;
              arg[o] = at;
            }
          }
        }
      }
      break;
    }
    case LayerKind::kDense: {
      const int O = L.units;
      const int I = x.c;
      gemm(false, false, O, batch_, I, T(1), p, I, x.data.data(), batch_, T(0), y.data.data(), batch_);
      const T* bias = p + static_cast<std::size_t>(O) * I;
      for (int o = 0; o < O; ++o)
        for (int n = 0; n < batch_; ++n) y.data[static_cast<std::size_t>(o) * batch_ + n] += bias[o];
      break;
    }
    case LayerKind::kAddSkip: {
      const Tensor<T>& shortcut = x;
      const Tensor<T>& residual = value(op.in[1]);
      y.data = residual.data;
      const int shared = std::min(shortcut.c, residual.c);
      const std::size_t M = y.plane();
      for (int c = 0; c < shared; ++c) {
        const T* s = shortcut.channel(c);
        T* d = y.channel(c);
        for (std::size_t j = 0; j < M; ++j) d[j] += s[j];
      }
      break;
    }
    case LayerKind::kConcat: {
      auto it = y.data.begin();
      for (int src : op.in) {
        const Tensor<T>& t = value(src);
        it = std::copy(t.data.begin(), t.data.end(), it);
      }
      break;
    }
    case LayerKind::kFlatten: {
      const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
      for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < batch_; ++n) {
          const T* src = x.data.data() + (static_cast<std::size_t>(c) * batch_ + n) * hw;
          for (std::size_t k = 0; k < hw; ++k) y.data[(c * hw + k) * batch_ + n] = src[k];
        }
      break;
    }
  }
}

template <typename T>
void Network<T>::backward(std::span<const T> d_output) {
  const Tensor<T>& out = value(output_slot_);
  if (d_output.size() != out.size()) {
    throw ShapeError("backward: expected " + std::to_string(out.size()) + " output gradients, got " +
                     std::to_string(d_output.size()));
  }
  std::fill(grads_.begin(), grads_.end(), T(0));
  for (auto& g : dvalues_) g = Tensor<T>();
  Tensor<T>& seed = grad_slot(output_slot_);
  std::copy(d_output.begin(), d_output.end(), seed.data.begin());
  for (std::size_t i = ops_.size(); i-- > 0;) {
    if (dvalues_[i].data.empty()) continue;
    backward_op(i);
    dvalues_[i] = Tensor<T>();
  }
}

template <typename T>
void Network<T>::backward_op(std::size_t i) {
  const Op& op = ops_[i];
  const LayerSpec& L = op.layer;
  const Tensor<T>& x = value(op.in[0]);
  const Tensor<T>& y = values_[i];
  const Tensor<T>& dy = dvalues_[i];
  const bool want_dx = op.in[0] >= n_external_;
  const T* p = params_.data() + op.param;
  T* dp = grads_.data() + op.param;

  switch (L.kind) {
    case LayerKind::kConv: {
      const ConvGeom g = conv_geom(x, L.kernel, L.stride);
      const T* col = x.data.data();
      if (!g.identity()) {
        col_.resize(g.rows() * g.cols());
        im2col(x.data.data(), g, col_.data());
        col = col_.data();
      }
      const int F = L.filters;
      const int P = static_cast<int>(g.cols());
      const int K = static_cast<int>(g.rows());
      gemm(false, true, F, K, P, T(1), dy.data.data(), P, col, P, T(1), dp, K);
      T* db = dp + static_cast<std::size_t>(F) * K;
      for (int f = 0; f < F; ++f) {
        const T* row = dy.channel(f);
        T s = 0;
        for (int j = 0; j < P; ++j) s += row[j];
        db[f] += s;
      }
      if (want_dx) {
        Tensor<T>& dx = grad_slot(op.in[0]);
        if (g.identity()) {
          gemm(true, false, K, P, F, T(1), p, K, dy.data.data(), P, T(1), dx.data.data(), P);
        } else {
          dcol_.resize(g.rows() * g.cols());
          gemm(true, false, K, P, F, T(1), p, K, dy.data.data(), P, T(0), dcol_.data(), P);
          col2im_add(dcol_.data(), g, dx.data.data());
        }
      }
      break;
    }
    case LayerKind::kBatchNorm: {
      const int C = x.c;
      const std::size_t M = x.plane();
      const auto& mean = bn_mean_[i];
      const auto& inv = bn_inv_std_[i];
      const T* gamma = p;
      Tensor<T>* dx = want_dx ? &grad_slot(op.in[0]) : nullptr;
      for (int c = 0; c < C; ++c) {
        const T* xc = x.channel(c);
        const T* dyc = dy.channel(c);
        double sum_dy = 0, sum_dy_xhat = 0;
        for (std::size_t j = 0; j < M; ++j) {
          const double xhat = (static_cast<double>(xc[j]) - mean[c]) * inv[c];
          sum_dy += dyc[j];
          sum_dy_xhat += dyc[j] * xhat;
        }
        dp[c] += static_cast<T>(sum_dy_xhat);
        dp[C + c] += static_cast<T>(sum_dy);
        if (!dx) continue;
        T* dxc = dx->channel(c);
        if (mode_ == Mode::kTrain) {
          const double k = static_cast<double>(gamma[c]) * inv[c] / static_cast<double>(M);
          const double mdy = sum_dy, mdyx = sum_dy_xhat;
          for (std::size_t j = 0; j < M; ++j) {
            const double xhat = (static_cast<double>(xc[j]) - mean[c]) * inv[c];
            dxc[j] += static_cast<T>(k * (static_cast<double>(M) * dyc[j] - mdy - xhat * mdyx));
          }
        } else {
          const T k = gamma[c] * inv[c];
          for (std::size_t j = 0; j < M; ++j) dxc[j] += k * dyc[j];
        }
      }
      break;
    }
    case LayerKind::kRelu: {
      if (!want_dx) break;
      Tensor<T>& dx = grad_slot(op.in[0]);
      for (std::size_t j = 0; j < y.size(); ++j)
        if (y.data[j] > T(0)) dx.data[j] += dy.data[j];
      break;
    }
    case LayerKind::kSigmoid: {
      if (!want_dx) break;
      Tensor<T>& dx = grad_slot(op.in[0]);
      for (std::size_t j = 0; j < y.size(); ++j) dx.data[j] += dy.data[j] * y.data[j] * (T(1) - y.data[j]);
      break;
    }
    case LayerKind::kDropout: {
      if (!want_dx) break;
      Tensor<T>& dx = grad_slot(op.in[0]);
      if (mode_ == Mode::kEval) {
        for (std::size_t j = 0; j < y.size(); ++j) dx.data[j] += dy.data[j];
      } else {
        const auto& mask = mask_[i];
        for (std::size_t j = 0; j < y.size(); ++j) dx.data[j] += dy.data[j] * mask[j];
      }
      break;
    }
    case LayerKind::kMaxPool: {
      if (!want_dx) break;
      Tensor<T>& dx = grad_slot(op.in[0]);
      const auto& arg = argmax_[i];
      const std::size_t per_channel_out = y.plane();
      for (int c = 0; c < y.c; ++c) {
        T* dxc = dx.channel(c);
        const T* dyc = dy.channel(c);
        const std::int32_t* ac = arg.data() + c * per_channel_out;
        for (std::size_t j = 0; j < per_channel_out; ++j) dxc[ac[j]] += dyc[j];
      }
      break;
    }
    case LayerKind::kDense: {
      const int O = L.units;
      const int I = x.c;
      gemm(false, true, O, I, batch_, T(1), dy.data.data(), batch_, x.data.data(), batch_, T(1), dp, I);
      T* db = dp + static_cast<std::size_t>(O) * I;
      for (int o = 0; o < O; ++o)
        for (int n = 0; n < batch_; ++n) db[o] += dy.data[static_cast<std::size_t>(o) * batch_ + n];
      if (want_dx) {
        Tensor<T>& dx = grad_slot(op.in[0]);
        gemm(true, false, I, batch_, O, T(1), p, I, dy.data.data(), batch_, T(1), dx.data.data(), batch_);
      }
      break;
    }
    case LayerKind::kAddSkip: {
      const int r = op.in[1];
      if (r >= n_external_) {
        Tensor<T>& dr = grad_slot(r);
        for (std::size_t j = 0; j < dy.size(); ++j) dr.data[j] += dy.data[j];
      }
      if (want_dx) {
        Tensor<T>& ds = grad_slot(op.in[0]);
        const int shared = std::min(x.c, dy.c);
        const std::size_t M = dy.plane();
        for (int c = 0; c < shared; ++c) {
          const T* s = dy.channel(c);
          T* d = ds.channel(c);
          for (std::size_t j = 0; j < M; ++j) d[j] += s[j];
        }
      }
      break;
    }
    case LayerKind::kConcat: {
      std::size_t offset = 0;
      for (int src : op.in) {
        const std::size_t len = value(src).size();
        if (src >= n_external_) {
          Tensor<T>& d = grad_slot(src);
          for (std::size_t j = 0; j < len; ++j) d.data[j] += dy.data[offset + j];
        }
        offset += len;
      }
      break;
    }
    case LayerKind::kFlatten: {
      if (!want_dx) break;
      Tensor<T>& dx = grad_slot(op.in[0]);
      const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
      for (int c = 0; c < x.c; ++c)
        for (int n = 0; n < batch_; ++n) {
          T* dst = dx.data.data() + (static_cast<std::size_t>(c) * batch_ + n) * hw;
          for (std::size_t k = 0; k < hw; ++k) dst[k] += dy.data[(c * hw + k) * batch_ + n];
        }
      break;
    }
  }
}

template class Network<float>;
template class Network<double>;

}  // namespace gripstab
