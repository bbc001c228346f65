#pragma once

// Small differentiable classifiers over a flat parameter vector.
//
// Supported layers: dense, relu, conv2d (valid padding, stride 1) and
// flatten. Inputs are always [batch x features]; a conv layer interprets its
// feature row as channel-major C x H x W. Each layer has an explicit reverse
// rule (backward) and an explicit forward-mode rule (logits_jvp).

#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dynlab/errors.hpp"
#include "dynlab/rng.hpp"
#include "dynlab/tensor.hpp"

namespace dynlab {

enum class LayerKind { dense, relu, conv2d, flatten };

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t in = 0;   // dense input width, or relu/flatten width
  std::size_t out = 0;  // dense output width
  // conv2d geometry
  std::size_t channels = 0, height = 0, width = 0, filters = 0, kernel = 0;

  static LayerSpec dense(std::size_t in, std::size_t out) {
    return {LayerKind::dense, in, out};
  }
  static LayerSpec relu(std::size_t n) { return {LayerKind::relu, n, n}; }
  static LayerSpec flatten(std::size_t n) { return {LayerKind::flatten, n, n}; }
  static LayerSpec conv2d(std::size_t channels, std::size_t height, std::size_t width,
                          std::size_t filters, std::size_t kernel) {
    LayerSpec s{LayerKind::conv2d};
    s.channels = channels;
    s.height = height;
    s.width = width;
    s.filters = filters;
    s.kernel = kernel;
    if (kernel == 0 || kernel > height || kernel > width) {
      throw ArgumentError("conv2d: kernel must fit inside the input");
    }
    s.in = channels * height * width;
    s.out = filters * s.out_height() * s.out_width();
    return s;
  }

  std::size_t out_height() const { return height - kernel + 1; }
  std::size_t out_width() const { return width - kernel + 1; }

  std::size_t param_size() const {
    switch (kind) {
      case LayerKind::dense: return in * out + out;
      case LayerKind::conv2d: return filters * channels * kernel * kernel + filters;
      default: return 0;
    }
  }

  std::string descriptor() const {
    std::ostringstream os;
    switch (kind) {
      case LayerKind::dense: os << "dense:" << in << ':' << out; break;
      case LayerKind::relu: os << "relu:" << in; break;
      case LayerKind::flatten: os << "flatten:" << in; break;
      case LayerKind::conv2d:
        os << "conv2d:" << channels << ':' << height << ':' << width << ':' << filters << ':'
           << kernel;
        break;
    }
    return os.str();
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

class Network {
 public:
  Network() = default;

  explicit Network(std::vector<LayerSpec> topology) : layers_(std::move(topology)) {
    if (layers_.empty()) throw ArgumentError("network needs at least one layer");
    std::size_t offset = 0;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i > 0 && layers_[i].in != layers_[i - 1].out) {
        throw DimensionError("layer " + std::to_string(i) + " expects width " +
                             std::to_string(layers_[i].in) + " but receives " +
                             std::to_string(layers_[i - 1].out));
      }
      offsets_.push_back(offset);
      offset += layers_[i].param_size();
    }
    params_.assign(offset, 0.0);
  }

  static Network from_descriptor(const std::string& text) {
    std::vector<LayerSpec> specs;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
      std::vector<std::size_t> nums;
      std::stringstream fs(item);
      std::string name, tok;
      std::getline(fs, name, ':');
      while (std::getline(fs, tok, ':')) nums.push_back(std::stoul(tok));
      if (name == "dense" && nums.size() == 2) {
        specs.push_back(LayerSpec::dense(nums[0], nums[1]));
      } else if (name == "relu" && nums.size() == 1) {
        specs.push_back(LayerSpec::relu(nums[0]));
      } else if (name == "flatten" && nums.size() == 1) {
        specs.push_back(LayerSpec::flatten(nums[0]));
      } else if (name == "conv2d" && nums.size() == 5) {
        specs.push_back(LayerSpec::conv2d(nums[0], nums[1], nums[2], nums[3], nums[4]));
      } else {
        throw ArgumentError("bad layer descriptor '" + item + "'");
      }
    }
    return Network(std::move(specs));
  }

  std::string descriptor() const {
    std::string out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (i) out += ';';
      out += layers_[i].descriptor();
    }
    return out;
  }

  const std::vector<LayerSpec>& topology() const noexcept { return layers_; }
  std::size_t layer_offset(std::size_t i) const { return offsets_[i]; }
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }
  std::size_t param_count() const noexcept { return params_.size(); }

  std::span<const double> params() const noexcept { return params_; }
  std::span<double> params() noexcept { return params_; }

  void set_params(std::vector<double> p) {
    if (p.size() != params_.size()) throw DimensionError("set_params: length mismatch");
    params_ = std::move(p);
  }

  // He-normal weights (std = sqrt(2 / fan_in)), zero biases.
  void init_weights(Rng& rng) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      std::size_t fan_in = 0, weights = 0;
      if (l.kind == LayerKind::dense) {
        fan_in = l.in;
        weights = l.in * l.out;
      } else if (l.kind == LayerKind::conv2d) {
        fan_in = l.channels * l.kernel * l.kernel;
        weights = l.filters * fan_in;
      } else {
        continue;
      }
      const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
      double* p = params_.data() + offsets_[i];
      for (std::size_t j = 0; j < weights; ++j) p[j] = stddev * rng.normal();
      for (std::size_t j = weights; j < l.param_size(); ++j) p[j] = 0.0;
    }
  }

 private:
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

// Model zoo ----------------------------------------------------------------

inline Network make_mlp(std::size_t in, const std::vector<std::size_t>& hidden,
                        std::size_t classes, Rng& rng) {
  std::vector<LayerSpec> specs;
  std::size_t width = in;
  for (auto h : hidden) {
    specs.push_back(LayerSpec::dense(width, h));
    specs.push_back(LayerSpec::relu(h));
    width = h;
  }
  specs.push_back(LayerSpec::dense(width, classes));
  Network net(std::move(specs));
  net.init_weights(rng);
  return net;
}

// Two valid convolutions followed by two dense layers.
inline Network make_convnet(std::size_t channels, std::size_t height, std::size_t width,
                            std::size_t classes, std::size_t filters1, std::size_t filters2,
                            std::size_t kernel, std::size_t hidden, Rng& rng) {
  std::vector<LayerSpec> specs;
  auto c1 = LayerSpec::conv2d(channels, height, width, filters1, kernel);
  specs.push_back(c1);
  specs.push_back(LayerSpec::relu(c1.out));
  auto c2 = LayerSpec::conv2d(filters1, c1.out_height(), c1.out_width(), filters2, kernel);
  specs.push_back(c2);
  specs.push_back(LayerSpec::relu(c2.out));
  specs.push_back(LayerSpec::flatten(c2.out));
  specs.push_back(LayerSpec::dense(c2.out, hidden));
  specs.push_back(LayerSpec::relu(hidden));
  specs.push_back(LayerSpec::dense(hidden, classes));
  Network net(std::move(specs));
  net.init_weights(rng);
  return net;
}

// Layer kernels --------------------------------------------------------------

namespace detail {

// out[b] = in[b] * W (+ bias). W is [in x out] row-major.
inline void dense_apply(const LayerSpec& l, const Tensor& in, const double* w, const double* bias,
                        Tensor& out) {
  for (std::size_t b = 0; b < in.rows(); ++b) {
    auto x = in.row(b);
    auto y = out.row(b);
    if (bias) {
      for (std::size_t j = 0; j < l.out; ++j) y[j] += bias[j];
    }
    for (std::size_t i = 0; i < l.in; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      const double* wrow = w + i * l.out;
      for (std::size_t j = 0; j < l.out; ++j) y[j] += xi * wrow[j];
    }
  }
}

inline void conv_apply(const LayerSpec& l, const Tensor& in, const double* w, const double* bias,
                       Tensor& out) {
  const std::size_t oh = l.out_height(), ow = l.out_width(), k = l.kernel;
  for (std::size_t b = 0; b < in.rows(); ++b) {
    auto x = in.row(b);
    auto y = out.row(b);
    for (std::size_t f = 0; f < l.filters; ++f) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias[f] : 0.0;
          for (std::size_t c = 0; c < l.channels; ++c) {
            const double* wk = w + ((f * l.channels + c) * k) * k;
            const double* xc = x.data() + c * l.height * l.width;
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                acc += wk[ky * k + kx] * xc[(oy + ky) * l.width + ox + kx];
              }
            }
          }
          y[(f * oh + oy) * ow + ox] += acc;
        }
      }
    }
  }
}

}  // namespace detail

// Every layer's input plus the final logits; activations[0] is the batch.
struct ForwardCache {
  std::vector<Tensor> activations;
  const Tensor& logits() const { return activations.back(); }
};

inline void check_batch(const Network& net, const Tensor& x) {
  x.require_rank(2);
  if (x.cols() != net.input_dim()) {
    throw DimensionError("input has " + std::to_string(x.cols()) + " features, network expects " +
                         std::to_string(net.input_dim()));
  }
}

inline ForwardCache forward_cached(const Network& net, const Tensor& x) {
  check_batch(net, x);
  ForwardCache cache;
  cache.activations.reserve(net.topology().size() + 1);
  cache.activations.push_back(x);
  const auto params = net.params();
  for (std::size_t i = 0; i < net.topology().size(); ++i) {
    const auto& l = net.topology()[i];
    const Tensor& in = cache.activations.back();
    const double* p = params.data() + net.layer_offset(i);
    Tensor out({in.rows(), l.out});
    switch (l.kind) {
      case LayerKind::dense: detail::dense_apply(l, in, p, p + l.in * l.out, out); break;
      case LayerKind::conv2d:
        detail::conv_apply(l, in, p, p + l.filters * l.channels * l.kernel * l.kernel, out);
        break;
      case LayerKind::relu:
        for (std::size_t j = 0; j < in.size(); ++j) out[j] = in[j] > 0.0 ? in[j] : 0.0;
        break;
      case LayerKind::flatten: out = in; break;
    }
    cache.activations.push_back(std::move(out));
  }
  return cache;
}

inline Tensor forward(const Network& net, const Tensor& x) {
  return std::move(forward_cached(net, x).activations.back());
}

// Reverse-mode pass: gradient of sum_b <dlogits[b], logits[b]> w.r.t. params.
inline std::vector<double> backward(const Network& net, const ForwardCache& cache,
                                    const Tensor& dlogits) {
  if (dlogits.shape() != cache.logits().shape()) {
    throw DimensionError("backward: dlogits shape " + dlogits.shape_string() +
                         " does not match logits " + cache.logits().shape_string());
  }
  std::vector<double> grad(net.param_count(), 0.0);
  const auto params = net.params();
  Tensor dy = dlogits;
  for (std::size_t li = net.topology().size(); li-- > 0;) {
    const auto& l = net.topology()[li];
    const Tensor& x = cache.activations[li];
    const double* w = params.data() + net.layer_offset(li);
    double* g = grad.data() + net.layer_offset(li);
    const bool need_dx = li > 0;
    Tensor dx = need_dx ? Tensor({x.rows(), l.in}) : Tensor();
    switch (l.kind) {
      case LayerKind::dense: {
        double* gb = g + l.in * l.out;
        for (std::size_t b = 0; b < x.rows(); ++b) {
          auto xr = x.row(b);
          auto dyr = dy.row(b);
          for (std::size_t j = 0; j < l.out; ++j) gb[j] += dyr[j];
          for (std::size_t i = 0; i < l.in; ++i) {
            const double xi = xr[i];
            double* grow = g + i * l.out;
            const double* wrow = w + i * l.out;
            if (xi != 0.0) {
              for (std::size_t j = 0; j < l.out; ++j) grow[j] += xi * dyr[j];
            }
            if (need_dx) {
              double s = 0.0;
              for (std::size_t j = 0; j < l.out; ++j) s += wrow[j] * dyr[j];
              dx(b, i) = s;
            }
          }
        }
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t oh = l.out_height(), ow = l.out_width(), k = l.kernel;
        double* gb = g + l.filters * l.channels * k * k;
        for (std::size_t b = 0; b < x.rows(); ++b) {
          auto xr = x.row(b);
          auto dyr = dy.row(b);
          for (std::size_t f = 0; f < l.filters; ++f) {
            for (std::size_t oy = 0; oy < oh; ++oy) {
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const double d = dyr[(f * oh + oy) * ow + ox];
                gb[f] += d;
                if (d == 0.0) continue;
                for (std::size_t c = 0; c < l.channels; ++c) {
                  const std::size_t wbase = ((f * l.channels + c) * k) * k;
                  const std::size_t xbase = c * l.height * l.width;
                  for (std::size_t ky = 0; ky < k; ++ky) {
                    for (std::size_t kx = 0; kx < k; ++kx) {
                      const std::size_t xi = xbase + (oy + ky) * l.width + ox + kx;
                      g[wbase + ky * k + kx] += d * xr[xi];
                      if (need_dx) dx(b, xi) += d * w[wbase + ky * k + kx];
                    }
                  }
                }
              }
            }
          }
        }
        break;
      }
      case LayerKind::relu:
        if (need_dx) {
          for (std::size_t j = 0; j < x.size(); ++j) dx[j] = x[j] > 0.0 ? dy[j] : 0.0;
        }
        break;
      case LayerKind::flatten:
        if (need_dx) dx = dy;
        break;
    }
    if (need_dx) dy = std::move(dx);
  }
  return grad;
}

// Forward-mode product: row b of the result is J_b * direction, where J_b is
// the Jacobian of logits[b] with respect to the parameters.
inline Tensor logits_jvp(const Network& net, const Tensor& x, std::span<const double> direction) {
  check_batch(net, x);
  if (direction.size() != net.param_count()) {
    throw DimensionError("logits_jvp: direction length " + std::to_string(direction.size()) +
                         " != param_count " + std::to_string(net.param_count()));
  }
  const auto params = net.params();
  Tensor value = x;
  Tensor tangent({x.rows(), x.cols()}, 0.0);
  bool tangent_zero = true;
  for (std::size_t i = 0; i < net.topology().size(); ++i) {
    const auto& l = net.topology()[i];
    const double* w = params.data() + net.layer_offset(i);
    const double* dw = direction.data() + net.layer_offset(i);
    Tensor v_out({value.rows(), l.out});
    Tensor t_out({value.rows(), l.out});
    switch (l.kind) {
      case LayerKind::dense: {
        const std::size_t nw = l.in * l.out;
        detail::dense_apply(l, value, w, w + nw, v_out);
        if (!tangent_zero) detail::dense_apply(l, tangent, w, nullptr, t_out);
        detail::dense_apply(l, value, dw, dw + nw, t_out);
        tangent_zero = false;
        break;
      }
      case LayerKind::conv2d: {
        const std::size_t nw = l.filters * l.channels * l.kernel * l.kernel;
        detail::conv_apply(l, value, w, w + nw, v_out);
        if (!tangent_zero) detail::conv_apply(l, tangent, w, nullptr, t_out);
        detail::conv_apply(l, value, dw, dw + nw, t_out);
        tangent_zero = false;
        break;
      }
      case LayerKind::relu:
        for (std::size_t j = 0; j < value.size(); ++j) {
          const bool on = value[j] > 0.0;
          v_out[j] = on ? value[j] : 0.0;
          t_out[j] = on ? tangent[j] : 0.0;
        }
        break;
      case LayerKind::flatten:
        v_out = value;
        t_out = tangent;
        break;
    }
    value = std::move(v_out);
    tangent = std::move(t_out);
  }
  return tangent;
}

}  // namespace dynlab
