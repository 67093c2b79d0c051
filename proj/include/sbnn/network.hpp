#pragma once

// Fully connected feed-forward network with scalar input and output: the
// forward map, its parameter gradient, and the i.i.d. Gaussian likelihood.

#include <cstddef>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "sbnn/common.hpp"

namespace sbnn {

enum class Activation { tanh, sigmoid, relu };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw InvalidArgument("unknown activation '" + std::string(s) + "'");
}

inline double activate(Activation a, double z) {
  switch (a) {
    case Activation::tanh: return std::tanh(z);
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-z));
    case Activation::relu: return z > 0.0 ? z : 0.0;
  }
  return z;
}

// relu'(0) is taken as 0.
inline double activate_derivative(Activation a, double z) {
  switch (a) {
    case Activation::tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-z));
      return s * (1.0 - s);
    }
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
  }
  return 1.0;
}

enum class ParamKind { weight, bias };

/// One named scalar of the flat parameter vector. `layer` is 1-based; for a
/// weight, `row` is the receiving neuron j and `col` the sending neuron i of
/// W^[layer]_{ji}; for a bias, `row` is the neuron and `col` is 0.
struct ParamInfo {
  std::string name;
  int layer = 0;
  ParamKind kind = ParamKind::weight;
  int row = 0;
  int col = 0;
};

struct NetworkSpec {
  std::vector<int> layer_sizes{1, 3, 1};
  Activation activation = Activation::tanh;

  void validate() const {
    require(layer_sizes.size() >= 2, "network needs at least an input and an output layer");
    for (int s : layer_sizes) require(s >= 1, "layer sizes must be positive");
    require(layer_sizes.front() == 1 && layer_sizes.back() == 1,
            "only scalar-input scalar-output networks are supported");
  }

  std::size_t num_layers() const { return layer_sizes.size() - 1; }

  std::size_t num_params() const {
    std::size_t n = 0;
    for (std::size_t l = 1; l < layer_sizes.size(); ++l)
      n += static_cast<std::size_t>(layer_sizes[l]) * static_cast<std::size_t>(layer_sizes[l - 1] + 1);
    return n;
  }

  std::string describe() const {
    std::string s;
    for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
      if (l) s += '-';
      s += std::to_string(layer_sizes[l]);
    }
    return s;
  }

  bool operator==(const NetworkSpec&) const = default;
};

namespace detail {
inline std::string index_suffix(int a, int b) {
  if (a < 10 && b < 10) return std::to_string(a) + std::to_string(b);
  return std::to_string(a) + "." + std::to_string(b);
}
}  // namespace detail

/// Bijection between flat indices and named network parameters. Order: for
/// each layer, the weight matrix row-major, then the bias vector, so the
/// 1-3-1 net reads W1_11 W1_21 W1_31 b1_1 b1_2 b1_3 W2_11 W2_12 W2_13 b2_1.
class ParamLayout {
 public:
  explicit ParamLayout(const NetworkSpec& spec) {
    spec.validate();
    for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
      const int rows = spec.layer_sizes[l];
      const int cols = spec.layer_sizes[l - 1];
      const int layer = static_cast<int>(l);
      offsets_.push_back(entries_.size());
      for (int j = 1; j <= rows; ++j)
        for (int i = 1; i <= cols; ++i)
          entries_.push_back({"W" + std::to_string(layer) + "_" + detail::index_suffix(j, i), layer,
                              ParamKind::weight, j, i});
      for (int j = 1; j <= rows; ++j)
        entries_.push_back({"b" + std::to_string(layer) + "_" + std::to_string(j), layer,
                            ParamKind::bias, j, 0});
    }
    for (std::size_t k = 0; k < entries_.size(); ++k) by_name_.emplace(entries_[k].name, k);
  }

  std::size_t size() const { return entries_.size(); }
  const ParamInfo& operator[](std::size_t k) const { return entries_[k]; }
  const std::vector<ParamInfo>& entries() const { return entries_; }

  /// Flat index of the first weight of `layer` (1-based).
  std::size_t layer_offset(int layer) const { return offsets_.at(static_cast<std::size_t>(layer - 1)); }

  std::size_t index_of(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) throw InvalidArgument("unknown parameter name '" + std::string(name) + "'");
    return it->second;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

 private:
  std::vector<ParamInfo> entries_;
  std::vector<std::size_t> offsets_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Per-layer weight matrices and bias vectors.
struct LayerParams {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
};

/// Flat parameter vector tied to the layout of a network.
struct ParamVector {
  std::shared_ptr<const ParamLayout> layout;
  Vector values;

  explicit ParamVector(const NetworkSpec& spec)
      : layout(std::make_shared<const ParamLayout>(spec)), values(Vector::Zero(static_cast<Eigen::Index>(layout->size()))) {}
  ParamVector(const NetworkSpec& spec, Vector v)
      : layout(std::make_shared<const ParamLayout>(spec)), values(std::move(v)) {
    require(static_cast<std::size_t>(values.size()) == layout->size(), "parameter vector length does not match network");
  }

  double& operator[](std::string_view name) { return values[static_cast<Eigen::Index>(layout->index_of(name))]; }
  double operator[](std::string_view name) const { return values[static_cast<Eigen::Index>(layout->index_of(name))]; }
};

inline LayerParams unflatten(const NetworkSpec& spec, const Eigen::Ref<const Vector>& flat) {
  require(static_cast<std::size_t>(flat.size()) == spec.num_params(), "parameter vector length does not match network");
  LayerParams out;
  Eigen::Index k = 0;
  for (std::size_t l = 1; l < spec.layer_sizes.size(); ++l) {
    const Eigen::Index rows = spec.layer_sizes[l];
    const Eigen::Index cols = spec.layer_sizes[l - 1];
    Matrix w(rows, cols);
    for (Eigen::Index j = 0; j < rows; ++j)
      for (Eigen::Index i = 0; i < cols; ++i) w(j, i) = flat[k++];
    out.weights.push_back(std::move(w));
    out.biases.push_back(flat.segment(k, rows));
    k += rows;
  }
  return out;
}

inline Vector flatten(const NetworkSpec& spec, const LayerParams& p) {
  Vector out(static_cast<Eigen::Index>(spec.num_params()));
  require(p.weights.size() == spec.num_layers() && p.biases.size() == spec.num_layers(), "layer count mismatch");
  Eigen::Index k = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    const Matrix& w = p.weights[l];
    require(w.rows() == spec.layer_sizes[l + 1] && w.cols() == spec.layer_sizes[l], "weight shape mismatch");
    for (Eigen::Index j = 0; j < w.rows(); ++j)
      for (Eigen::Index i = 0; i < w.cols(); ++i) out[k++] = w(j, i);
    require(p.biases[l].size() == w.rows(), "bias shape mismatch");
    out.segment(k, w.rows()) = p.biases[l];
    k += w.rows();
  }
  return out;
}

namespace detail {

// Pre-activations and activations for a batch of inputs, one column per input.
struct ForwardPass {
  std::vector<Matrix> pre;   // Z_l, l = 1..n
  std::vector<Matrix> post;  // A_l, l = 0..n  (A_0 = x, A_n = Z_n)
};

inline ForwardPass forward_pass(const NetworkSpec& spec, const Eigen::Ref<const Vector>& flat,
                                const Eigen::Ref<const Vector>& xs) {
  require(static_cast<std::size_t>(flat.size()) == spec.num_params(), "parameter vector length does not match network");
  ForwardPass fp;
  fp.post.emplace_back(xs.transpose());
  Eigen::Index k = 0;
  const std::size_t n = spec.num_layers();
  for (std::size_t l = 1; l <= n; ++l) {
    const Eigen::Index rows = spec.layer_sizes[l];
    const Eigen::Index cols = spec.layer_sizes[l - 1];
    Eigen::Map<const RowMatrix> w(flat.data() + k, rows, cols);
    k += rows * cols;
    Eigen::Map<const Vector> b(flat.data() + k, rows);
    k += rows;
    Matrix z = w * fp.post.back();
    z.colwise() += b;
    fp.pre.push_back(z);
    if (l == n) {
      fp.post.push_back(std::move(z));
    } else {
      fp.post.push_back(z.unaryExpr([a = spec.activation](double v) { return activate(a, v); }));
    }
  }
  return fp;
}

// Accumulates sum_i seed_i * d f(x_i) / d theta.
inline Vector backward(const NetworkSpec& spec, const Eigen::Ref<const Vector>& flat, const ForwardPass& fp,
                       const Eigen::Ref<const Vector>& seed) {
  Vector grad(flat.size());
  const std::size_t n = spec.num_layers();
  Matrix delta = seed.transpose();
  Eigen::Index end = flat.size();
  for (std::size_t l = n; l >= 1; --l) {
    const Eigen::Index rows = spec.layer_sizes[l];
    const Eigen::Index cols = spec.layer_sizes[l - 1];
    const Eigen::Index b_off = end - rows;
    const Eigen::Index w_off = b_off - rows * cols;
    grad.segment(b_off, rows) = delta.rowwise().sum();
    Eigen::Map<RowMatrix>(grad.data() + w_off, rows, cols) = delta * fp.post[l - 1].transpose();
    if (l > 1) {
      Eigen::Map<const RowMatrix> w(flat.data() + w_off, rows, cols);
      Matrix back = w.transpose() * delta;
      const Matrix& z = fp.pre[l - 2];
      delta = back.cwiseProduct(z.unaryExpr([a = spec.activation](double v) { return activate_derivative(a, v); }));
    }
    end = w_off;
  }
  return grad;
}

}  // namespace detail

/// Network output at each entry of xs.
inline Vector forward_batch(const NetworkSpec& spec, const Eigen::Ref<const Vector>& params,
                            const Eigen::Ref<const Vector>& xs) {
  auto fp = detail::forward_pass(spec, params, xs);
  return fp.post.back().row(0).transpose();
}

inline double forward(const NetworkSpec& spec, const Eigen::Ref<const Vector>& params, double x) {
  Vector xs(1);
  xs[0] = x;
  return forward_batch(spec, params, xs)[0];
}

inline double forward(const NetworkSpec& spec, const ParamVector& params, double x) {
  return forward(spec, params.values, x);
}

/// d forward(x) / d params.
inline Vector forward_param_gradient(const NetworkSpec& spec, const Eigen::Ref<const Vector>& params, double x) {
  Vector xs(1);
  xs[0] = x;
  auto fp = detail::forward_pass(spec, params, xs);
  return detail::backward(spec, params, fp, Vector::Ones(1));
}

struct Dataset {
  Vector x;
  Vector y;
  double noise_var = 0.5;
  std::string truth_fn_id;

  void validate() const {
    require(x.size() >= 1, "dataset must contain at least one point");
    require(x.size() == y.size(), "dataset x and y lengths differ");
    require(noise_var > 0.0 && std::isfinite(noise_var), "noise variance must be positive");
    for (Eigen::Index i = 1; i < x.size(); ++i) require(x[i] > x[i - 1], "dataset x must be strictly increasing");
  }
};

/// sum_i log N(y_i | f(x_i), noise_var)
inline double log_likelihood(const Dataset& data, const NetworkSpec& spec, const Eigen::Ref<const Vector>& params) {
  require(data.noise_var > 0.0, "noise variance must be positive");
  const Vector f = forward_batch(spec, params, data.x);
  const double sse = (data.y - f).squaredNorm();
  const auto n = static_cast<double>(data.x.size());
  return -0.5 * n * (kLog2Pi + std::log(data.noise_var)) - 0.5 * sse / data.noise_var;
}

inline double log_likelihood(const Dataset& data, const NetworkSpec& spec, const ParamVector& params) {
  return log_likelihood(data, spec, params.values);
}

inline Vector log_likelihood_gradient(const Dataset& data, const NetworkSpec& spec,
                                      const Eigen::Ref<const Vector>& params) {
  require(data.noise_var > 0.0, "noise variance must be positive");
  auto fp = detail::forward_pass(spec, params, data.x);
  const Vector resid = (data.y - fp.post.back().row(0).transpose()) / data.noise_var;
  return detail::backward(spec, params, fp, resid);
}

}  // namespace sbnn
