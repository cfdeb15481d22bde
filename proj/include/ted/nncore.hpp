#pragma once

// Dense networks with a layer-level gradient tape, Adam, and the EMA target
// update. Batches are column-major: one sample per column.

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ted/error.hpp"
#include "ted/rng.hpp"

namespace ted {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { none, relu, tanh };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    default: return "none";
  }
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "none") return Activation::none;
  throw ConfigError("activation", "unknown activation '" + s + "'");
}

struct DenseLayer {
  Matrix weights;  // out x in
  Vector biases;   // out
  Activation activation = Activation::none;
};

/// Parameters of a feed-forward net. The same type holds gradients.
struct DenseNetParams {
  std::vector<DenseLayer> layers;
  /// Layer normalization of the final pre-activation, with affine gain/bias.
  bool layer_norm = false;
  Vector ln_gain;
  Vector ln_bias;

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().weights.cols(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().weights.rows(); }

  /// Flat views of every tensor in a fixed order.
  std::vector<std::span<double>> spans() {
    std::vector<std::span<double>> out;
    for (auto& l : layers) {
      out.emplace_back(l.weights.data(), static_cast<std::size_t>(l.weights.size()));
      out.emplace_back(l.biases.data(), static_cast<std::size_t>(l.biases.size()));
    }
    if (layer_norm) {
      out.emplace_back(ln_gain.data(), static_cast<std::size_t>(ln_gain.size()));
      out.emplace_back(ln_bias.data(), static_cast<std::size_t>(ln_bias.size()));
    }
    return out;
  }
  std::vector<std::span<const double>> spans() const {
    std::vector<std::span<const double>> out;
    for (auto s : const_cast<DenseNetParams*>(this)->spans()) out.emplace_back(s.data(), s.size());
    return out;
  }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (auto s : spans()) n += s.size();
    return n;
  }

  DenseNetParams zeros_like() const {
    DenseNetParams z = *this;
    for (auto s : z.spans()) std::fill(s.begin(), s.end(), 0.0);
    return z;
  }

  bool same_shape(const DenseNetParams& o) const {
    if (layers.size() != o.layers.size() || layer_norm != o.layer_norm) return false;
    for (std::size_t i = 0; i < layers.size(); ++i)
      if (layers[i].weights.rows() != o.layers[i].weights.rows() ||
          layers[i].weights.cols() != o.layers[i].weights.cols())
        return false;
    return true;
  }

  bool operator==(const DenseNetParams& o) const {
    if (!same_shape(o)) return false;
    auto a = spans();
    auto b = o.spans();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!std::equal(a[i].begin(), a[i].end(), b[i].begin())) return false;
    return true;
  }

  DenseNetParams& operator+=(const DenseNetParams& o) {
    auto a = spans();
    auto b = o.spans();
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t j = 0; j < a[i].size(); ++j) a[i][j] += b[i][j];
    return *this;
  }

  /// Weights uniform in +-1/sqrt(fan_in), biases zero. sizes = {in, h1, ..., out}.
  static DenseNetParams init(const std::vector<std::size_t>& sizes, const std::vector<Activation>& acts,
                             bool layer_norm, Rng& rng) {
    if (sizes.size() < 2 || acts.size() != sizes.size() - 1)
      throw ShapeError("network needs sizes.size() == activations.size() + 1 >= 2");
    DenseNetParams p;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const auto in = static_cast<Eigen::Index>(sizes[i]);
      const auto out = static_cast<Eigen::Index>(sizes[i + 1]);
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      DenseLayer l{Matrix(out, in), Vector::Zero(out), acts[i]};
      for (Eigen::Index c = 0; c < in; ++c)
        for (Eigen::Index r = 0; r < out; ++r) l.weights(r, c) = rng.uniform(-bound, bound);
      p.layers.push_back(std::move(l));
    }
    p.layer_norm = layer_norm;
    if (layer_norm) {
      p.ln_gain = Vector::Ones(p.output_dim());
      p.ln_bias = Vector::Zero(p.output_dim());
    }
    return p;
  }
};

/// hidden relu layers, linear to `latent`, optional layer norm, then tanh.
inline DenseNetParams make_encoder(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t latent,
                                   bool layer_norm, Rng& rng) {
  std::vector<std::size_t> sizes{input_dim};
  std::vector<Activation> acts;
  for (auto h : hidden) {
    sizes.push_back(h);
    acts.push_back(Activation::relu);
  }
  sizes.push_back(latent);
  acts.push_back(Activation::tanh);
  return DenseNetParams::init(sizes, acts, layer_norm, rng);
}

/// hidden relu layers, then a linear output layer.
inline DenseNetParams make_mlp(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output,
                               Rng& rng) {
  std::vector<std::size_t> sizes{input_dim};
  std::vector<Activation> acts;
  for (auto h : hidden) {
    sizes.push_back(h);
    acts.push_back(Activation::relu);
  }
  sizes.push_back(output);
  acts.push_back(Activation::none);
  return DenseNetParams::init(sizes, acts, false, rng);
}

/// Primal values recorded by a forward pass, consumed by backward().
struct GradTape {
  struct Node {
    Matrix input;       // layer input
    Matrix pre;         // W x + b (after layer norm for the last layer, if enabled)
    Matrix output;      // activation(pre)
    Matrix ln_xhat;     // normalized values (last layer, layer norm only)
    Eigen::RowVectorXd ln_inv_std;
  };
  std::vector<Node> nodes;
  bool recorded = false;
};

namespace detail {

inline constexpr double layer_norm_eps = 1e-5;

inline void apply_activation(Activation a, const Matrix& pre, Matrix& out) {
  switch (a) {
    case Activation::relu: out = pre.cwiseMax(0.0); break;
    case Activation::tanh: out = pre.array().tanh().matrix(); break;
    default: out = pre; break;
  }
}

inline const char* node_part(int part) {
  switch (part) {
    case 0: return "input";
    case 1: return "pre-activation";
    default: return "output";
  }
}

}  // namespace detail

/// Batched forward pass. Records intermediates into `tape` when given.
inline Matrix forward(const DenseNetParams& net, const Matrix& x, GradTape* tape = nullptr) {
  if (net.layers.empty()) throw ShapeError("empty network");
  if (x.rows() != net.input_dim())
    throw ShapeError("network expects input of length " + std::to_string(net.input_dim()) + ", got " +
                     std::to_string(x.rows()));
  if (tape) {
    tape->nodes.clear();
    tape->nodes.resize(net.layers.size());
    tape->recorded = true;
  }
  Matrix a = x;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& l = net.layers[i];
    Matrix pre = l.weights * a;
    pre.colwise() += l.biases;
    const bool last = i + 1 == net.layers.size();
    if (last && net.layer_norm) {
      const double d = static_cast<double>(pre.rows());
      Eigen::RowVectorXd mean = pre.colwise().sum() / d;
      Matrix centered = pre.rowwise() - mean;
      Eigen::RowVectorXd var = centered.array().square().colwise().sum() / d;
      Eigen::RowVectorXd inv_std = (var.array() + detail::layer_norm_eps).rsqrt();
      Matrix xhat = centered.array().rowwise() * inv_std.array();
      pre = (xhat.array().colwise() * net.ln_gain.array()).colwise() + net.ln_bias.array();
      if (tape) {
        tape->nodes[i].ln_xhat = std::move(xhat);
        tape->nodes[i].ln_inv_std = std::move(inv_std);
      }
    }
    Matrix out;
    detail::apply_activation(l.activation, pre, out);
    if (tape) {
      tape->nodes[i].input = std::move(a);
      tape->nodes[i].pre = std::move(pre);
      tape->nodes[i].output = out;
    }
    a = std::move(out);
  }
  return a;
}

inline Vector forward(const DenseNetParams& net, const Vector& x) { return forward(net, Matrix(x)).col(0); }

/// Throws NumericalError naming the first non-finite tape node, if any.
inline void check_tape_finite(const GradTape& tape) {
  for (std::size_t i = 0; i < tape.nodes.size(); ++i) {
    const auto& n = tape.nodes[i];
    const Matrix* parts[] = {&n.input, &n.pre, &n.output};
    for (int p = 0; p < 3; ++p)
      if (!parts[p]->allFinite())
        throw NumericalError("non-finite value at layer " + std::to_string(i) + " " + detail::node_part(p));
  }
}

struct Gradients {
  DenseNetParams params;
  Matrix input;  // dL/dx, one column per sample
};

/// Reverse pass from dL/d(output). `loss` is checked for finiteness first;
/// on failure the first offending tape node is named.
inline Gradients backward(const DenseNetParams& net, const GradTape& tape, const Matrix& d_output, double loss = 0.0) {
  if (!tape.recorded || tape.nodes.size() != net.layers.size()) throw ShapeError("tape does not match network");
  if (!std::isfinite(loss)) {
    check_tape_finite(tape);
    throw NumericalError("non-finite loss (network values are finite)");
  }
  if (!d_output.allFinite()) {
    check_tape_finite(tape);
    throw NumericalError("non-finite output adjoint");
  }
  Gradients g{net.zeros_like(), Matrix()};
  Matrix delta = d_output;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const auto& l = net.layers[k];
    const auto& node = tape.nodes[k];
    switch (l.activation) {
      case Activation::relu: delta = (node.pre.array() > 0.0).select(delta, 0.0); break;
      case Activation::tanh: delta = (delta.array() * (1.0 - node.output.array().square())).matrix(); break;
      default: break;
    }
    if (k + 1 == net.layers.size() && net.layer_norm) {
      g.params.ln_gain = (delta.array() * node.ln_xhat.array()).rowwise().sum();
      g.params.ln_bias = delta.rowwise().sum();
      Matrix dxhat = delta.array().colwise() * net.ln_gain.array();
      const double d = static_cast<double>(dxhat.rows());
      Eigen::RowVectorXd mean_dx = dxhat.colwise().sum() / d;
      Eigen::RowVectorXd mean_dxx = (dxhat.array() * node.ln_xhat.array()).colwise().sum() / d;
      Matrix t = dxhat.rowwise() - mean_dx;
      t -= (node.ln_xhat.array().rowwise() * mean_dxx.array()).matrix();
      delta = t.array().rowwise() * node.ln_inv_std.array();
    }
    g.params.layers[k].weights.noalias() = delta * node.input.transpose();
    g.params.layers[k].biases = delta.rowwise().sum();
    delta = l.weights.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

/// Adaptive-moment optimizer state for one parameter container.
struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step = 0;
  std::vector<Eigen::ArrayXd> m;
  std::vector<Eigen::ArrayXd> v;
};

/// One bias-corrected Adam update. Accumulators are sized lazily on first use.
template <class Params>
void adam_step(Params& params, const Params& grads, AdamState& state) {
  auto p = params.spans();
  auto g = grads.spans();
  if (p.size() != g.size()) throw ShapeError("gradient structure differs from parameters");
  if (state.m.empty()) {
    for (auto s : p) {
      state.m.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(s.size())));
      state.v.push_back(Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(s.size())));
    }
  }
  if (state.m.size() != p.size()) throw ShapeError("optimizer state structure differs from parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size() || static_cast<std::size_t>(state.m[i].size()) != p[i].size())
      throw ShapeError("tensor " + std::to_string(i) + " size mismatch in optimizer step");
    Eigen::Map<Eigen::ArrayXd> pm(p[i].data(), static_cast<Eigen::Index>(p[i].size()));
    Eigen::Map<const Eigen::ArrayXd> gm(g[i].data(), static_cast<Eigen::Index>(g[i].size()));
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * gm;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * gm.square();
    pm -= state.learning_rate * (state.m[i] / c1) / ((state.v[i] / c2).sqrt() + state.epsilon);
  }
}

/// target <- tau * online + (1 - tau) * target.
template <class Params>
void ema_update(const Params& online, Params& target, double tau) {
  auto a = online.spans();
  auto b = target.spans();
  if (a.size() != b.size()) throw ShapeError("ema: parameter structures differ");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) throw ShapeError("ema: tensor size mismatch");
    for (std::size_t j = 0; j < a[i].size(); ++j) b[i][j] = tau * a[i][j] + (1.0 - tau) * b[i][j];
  }
}

// Checkpoint format (text, whitespace separated, doubles written with 17
// significant digits):
//
//   tednet 1
//   layers <L> layer_norm <0|1>
//   layer <rows> <cols> <activation>      (repeated L times, followed by)
//   <rows*cols weights, row-major>
//   <rows biases>
//   [ln <d> then d gains then d biases]   (only when layer_norm is 1)
inline void write_checkpoint(std::ostream& os, const DenseNetParams& net) {
  os << "tednet 1\n";
  os << "layers " << net.layers.size() << " layer_norm " << (net.layer_norm ? 1 : 0) << "\n";
  os.precision(17);
  for (const auto& l : net.layers) {
    os << "layer " << l.weights.rows() << " " << l.weights.cols() << " " << to_string(l.activation) << "\n";
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) os << (c ? " " : "") << l.weights(r, c);
      os << "\n";
    }
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) os << (r ? " " : "") << l.biases[r];
    os << "\n";
  }
  if (net.layer_norm) {
    os << "ln " << net.ln_gain.size() << "\n";
    for (Eigen::Index r = 0; r < net.ln_gain.size(); ++r) os << (r ? " " : "") << net.ln_gain[r];
    os << "\n";
    for (Eigen::Index r = 0; r < net.ln_bias.size(); ++r) os << (r ? " " : "") << net.ln_bias[r];
    os << "\n";
  }
}

inline DenseNetParams read_checkpoint(std::istream& is) {
  auto expect = [&](const std::string& word) {
    std::string tok;
    if (!(is >> tok) || tok != word) throw IoError("checkpoint: expected '" + word + "', got '" + tok + "'");
  };
  auto number = [&]() {
    double v;
    if (!(is >> v)) throw IoError("checkpoint: truncated numeric data");
    return v;
  };
  expect("tednet");
  if (number() != 1.0) throw IoError("checkpoint: unsupported version");
  expect("layers");
  const auto n_layers = static_cast<std::size_t>(number());
  expect("layer_norm");
  DenseNetParams net;
  net.layer_norm = number() != 0.0;
  for (std::size_t i = 0; i < n_layers; ++i) {
    expect("layer");
    const auto rows = static_cast<Eigen::Index>(number());
    const auto cols = static_cast<Eigen::Index>(number());
    std::string act;
    is >> act;
    DenseLayer l{Matrix(rows, cols), Vector(rows), activation_from_string(act)};
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) l.weights(r, c) = number();
    for (Eigen::Index r = 0; r < rows; ++r) l.biases[r] = number();
    if (!net.layers.empty() && net.layers.back().weights.rows() != cols)
      throw IoError("checkpoint: layer " + std::to_string(i) + " does not compose with its predecessor");
    net.layers.push_back(std::move(l));
  }
  if (net.layer_norm) {
    expect("ln");
    const auto d = static_cast<Eigen::Index>(number());
    if (d != net.output_dim()) throw IoError("checkpoint: layer norm width mismatch");
    net.ln_gain.resize(d);
    net.ln_bias.resize(d);
    for (Eigen::Index r = 0; r < d; ++r) net.ln_gain[r] = number();
    for (Eigen::Index r = 0; r < d; ++r) net.ln_bias[r] = number();
  }
  return net;
}

inline void save_checkpoint(const std::string& path, const DenseNetParams& net) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  write_checkpoint(os, net);
  if (!os) throw IoError("write failed for '" + path + "'");
}

inline DenseNetParams load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace ted
