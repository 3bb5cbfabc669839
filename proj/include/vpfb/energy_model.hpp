#ifndef VPFB_ENERGY_MODEL_HPP
#define VPFB_ENERGY_MODEL_HPP

// Scalar potential Phi(x, t[, c]) as a fully connected network.
//
// Points are rows: a batch X is B x n, times T are B x 1, and Phi is B x 1.
// The network input is [x, time features, class embedding]. Parameters live
// in one flat vector; bind() exposes them as tape leaves so that losses built
// from Phi and its input gradients can be differentiated by parameter.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vpfb/autodiff.hpp"
#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"

namespace vpfb {

enum class TimeEmbedding : std::uint8_t { raw, sinusoidal };

inline std::string to_string(TimeEmbedding e) { return e == TimeEmbedding::raw ? "raw" : "sinusoidal"; }

inline TimeEmbedding time_embedding_from_string(const std::string& s) {
  if (s == "raw") return TimeEmbedding::raw;
  if (s == "sinusoidal") return TimeEmbedding::sinusoidal;
  throw ConfigError("unknown time embedding '" + s + "'");
}

struct Architecture {
  int input_dim = 2;
  std::vector<int> hidden{128, 128, 128, 128};
  ad::Activation activation = ad::Activation::gelu;
  TimeEmbedding time_embedding = TimeEmbedding::raw;
  int time_frequencies = 4;  // sinusoidal only: [t, sin(pi 2^k t), cos(pi 2^k t)], k < time_frequencies
  int num_classes = 0;       // 0 = unconditional
  int class_embed_dim = 8;

  void validate() const {
    detail::require(input_dim >= 1, "arch: input_dim must be >= 1");
    for (int h : hidden) detail::require(h >= 1, "arch: hidden widths must be >= 1");
    detail::require(time_embedding == TimeEmbedding::raw || time_frequencies >= 1,
                    "arch: time_frequencies must be >= 1");
    detail::require(num_classes >= 0, "arch: num_classes must be >= 0");
    detail::require(num_classes == 0 || class_embed_dim >= 1, "arch: class_embed_dim must be >= 1");
  }

  int time_features() const { return time_embedding == TimeEmbedding::raw ? 1 : 1 + 2 * time_frequencies; }
  int embed_features() const { return num_classes > 0 ? class_embed_dim : 0; }
  int network_input() const { return input_dim + time_features() + embed_features(); }

  /// Widths of every affine layer, input first, ending in the scalar output.
  std::vector<int> layer_widths() const {
    std::vector<int> w{network_input()};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(1);
    return w;
  }

  Eigen::Index param_count() const {
    Eigen::Index n = static_cast<Eigen::Index>(num_classes) * embed_features();
    const auto w = layer_widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) n += static_cast<Eigen::Index>(w[l] + 1) * w[l + 1];
    return n;
  }

  bool operator==(const Architecture&) const = default;
};

/// Phi and its first derivatives for one batch, as tape nodes.
struct FieldEvaluation {
  ad::Var phi;     // B x 1
  ad::Var grad_x;  // B x n
  ad::Var grad_t;  // B x 1
};

/// Network parameters bound to a tape.
struct BoundParams {
  ad::Var embedding;  // C x E, only if conditional
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  /// All leaves in flat-vector order.
  std::vector<ad::Var> leaves() const {
    std::vector<ad::Var> out;
    if (embedding.valid()) out.push_back(embedding);
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l]);
      out.push_back(biases[l]);
    }
    return out;
  }
};

class EnergyModel {
 public:
  EnergyModel() : EnergyModel(Architecture{}, 0) {}

  /// Seeded initialization: weights ~ N(0, 1/fan_in), biases and embeddings as below.
  EnergyModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
    arch_.validate();
    params_.resize(arch_.param_count());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::Index k = 0;
    const Eigen::Index emb = static_cast<Eigen::Index>(arch_.num_classes) * arch_.embed_features();
    for (; k < emb; ++k) params_[k] = normal(rng);
    const auto w = arch_.layer_widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(w[l]));
      for (int i = 0; i < w[l] * w[l + 1]; ++i) params_[k++] = scale * normal(rng);
      for (int i = 0; i < w[l + 1]; ++i) params_[k++] = 0.0;
    }
  }

  EnergyModel(Architecture arch, Vector params, std::uint64_t seed = 0)
      : arch_(std::move(arch)), params_(std::move(params)), seed_(seed) {
    arch_.validate();
    if (params_.size() != arch_.param_count()) {
      throw ConfigError("EnergyModel: expected " + std::to_string(arch_.param_count()) + " parameters, got " +
                        std::to_string(params_.size()));
    }
  }

  const Architecture& arch() const { return arch_; }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }
  std::uint64_t seed() const { return seed_; }
  Eigen::Index dim() const { return arch_.input_dim; }
  bool conditional() const { return arch_.num_classes > 0; }

  void set_params(const Vector& p) {
    detail::require(p.size() == params_.size(), "EnergyModel::set_params: size mismatch");
    params_ = p;
  }

  /// Leaves for the current parameters; `trainable` decides whether they receive gradients.
  BoundParams bind(ad::Tape& tape, bool trainable) const {
    BoundParams b;
    auto leaf = [&](Matrix m) { return trainable ? tape.variable(std::move(m)) : tape.constant(std::move(m)); };
    Eigen::Index k = 0;
    if (conditional()) {
      const Eigen::Index c = arch_.num_classes;
      const Eigen::Index e = arch_.embed_features();
      b.embedding = leaf(Eigen::Map<const Matrix>(params_.data() + k, c, e));
      k += c * e;
    }
    const auto w = arch_.layer_widths();
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      b.weights.push_back(leaf(Eigen::Map<const Matrix>(params_.data() + k, w[l], w[l + 1])));
      k += static_cast<Eigen::Index>(w[l]) * w[l + 1];
      b.biases.push_back(leaf(Eigen::Map<const Matrix>(params_.data() + k, 1, w[l + 1])));
      k += w[l + 1];
    }
    return b;
  }

  /// Phi for a batch of tape nodes X (B x n) and T (B x 1).
  ad::Var forward(ad::Tape& tape, const BoundParams& b, ad::Var X, ad::Var T, const std::vector<int>& labels) const {
    const Eigen::Index B = X.rows();
    detail::require(X.cols() == dim(), "EnergyModel: input dimension " + std::to_string(X.cols()) + ", model expects " +
                                           std::to_string(dim()));
    detail::require(T.rows() == B && T.cols() == 1, "EnergyModel: time must be B x 1");

    ad::Var h = ad::concat_cols(X, time_features(tape, T));
    if (conditional()) {
      detail::require(static_cast<Eigen::Index>(labels.size()) == B, "EnergyModel: one class label per point required");
      Matrix onehot = Matrix::Zero(B, arch_.num_classes);
      for (Eigen::Index i = 0; i < B; ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        detail::require(c >= 0 && c < arch_.num_classes, "EnergyModel: class index " + std::to_string(c) +
                                                             " outside [0, " + std::to_string(arch_.num_classes) + ")");
        onehot(i, c) = 1.0;
      }
      h = ad::concat_cols(h, ad::matmul(tape.constant(std::move(onehot)), b.embedding));
    } else {
      detail::require(labels.empty(), "EnergyModel: class labels given to an unconditional model");
    }

    const std::size_t L = b.weights.size();
    for (std::size_t l = 0; l < L; ++l) {
      h = ad::matmul(h, b.weights[l]) + ad::broadcast_rows(b.biases[l], B);
      if (l + 1 < L) h = ad::activation(h, arch_.activation);
    }
    return h;
  }

  /// Phi, grad_x Phi and dPhi/dt on the tape. With create_graph the
  /// gradients stay differentiable (needed when they enter a loss).
  FieldEvaluation field(ad::Tape& tape, const BoundParams& b, const Matrix& X, const Vector& T,
                        const std::vector<int>& labels, bool create_graph) const {
    ad::Var x = tape.variable(X);
    ad::Var t = tape.variable(Matrix(T));
    ad::Var phi = forward(tape, b, x, t, labels);
    auto g = tape.grad(ad::sum(phi), {x, t}, create_graph);
    return {phi, g[0], g[1]};
  }

  /// Phi at each row of X.
  Vector energies(const Matrix& X, const Vector& T, const std::vector<int>& labels = {}) const {
    ad::Tape tape;
    const BoundParams b = bind(tape, false);
    ad::Var phi = forward(tape, b, tape.constant(X), tape.constant(Matrix(T)), labels);
    return phi.value().col(0);
  }

  double energy(const Vector& x, double t, int label = -1) const {
    const Matrix X = x.transpose();
    return energies(X, Vector::Constant(1, t), label_list(1, label))[0];
  }

  /// grad_x Phi (B x n) and dPhi/dt (B) at each row of X.
  std::pair<Matrix, Vector> input_grad(const Matrix& X, const Vector& T, const std::vector<int>& labels = {}) const {
    ad::Tape tape;
    const BoundParams b = bind(tape, false);
    const FieldEvaluation f = field(tape, b, X, T, labels, false);
    return {f.grad_x.value(), f.grad_t.value().col(0)};
  }

  /// grad_x Phi only, without differentiating through time.
  Matrix grad_x(const Matrix& X, const Vector& T, const std::vector<int>& labels = {}) const {
    ad::Tape tape;
    const BoundParams b = bind(tape, false);
    ad::Var x = tape.variable(X);
    ad::Var phi = forward(tape, b, x, tape.constant(Matrix(T)), labels);
    return tape.grad(ad::sum(phi), {x})[0].value();
  }

  /// Value and flat parameter gradient of a scalar loss.
  /// `build(tape, bound)` must return a 1x1 node.
  template <class LossBuilder>
  std::pair<double, Vector> param_grad(LossBuilder&& build) const {
    ad::Tape tape;
    const BoundParams b = bind(tape, true);
    ad::Var loss = build(tape, b);
    detail::require(loss.rows() == 1 && loss.cols() == 1, "param_grad: loss must be a scalar");
    const std::vector<ad::Var> leaves = b.leaves();
    const std::vector<ad::Var> grads = tape.grad(loss, std::span<const ad::Var>(leaves), false);
    return {loss.scalar(), flatten(grads)};
  }

  /// Concatenates per-leaf gradients into the flat parameter layout.
  Vector flatten(const std::vector<ad::Var>& grads) const {
    Vector out(params_.size());
    Eigen::Index k = 0;
    for (const ad::Var& g : grads) {
      const Matrix& m = g.value();
      out.segment(k, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
      k += m.size();
    }
    detail::require(k == params_.size(), "EnergyModel::flatten: gradient layout mismatch");
    return out;
  }

  static std::vector<int> label_list(Eigen::Index n, int label) {
    return label < 0 ? std::vector<int>{} : std::vector<int>(static_cast<std::size_t>(n), label);
  }

 private:
  ad::Var time_features(ad::Tape& tape, ad::Var T) const {
    if (arch_.time_embedding == TimeEmbedding::raw) return T;
    Matrix freq(1, arch_.time_frequencies);
    for (int k = 0; k < arch_.time_frequencies; ++k) freq(0, k) = std::numbers::pi * std::ldexp(1.0, k);
    ad::Var z = ad::matmul(T, tape.constant(std::move(freq)));
    ad::Var s = ad::activation(z, ad::Activation::sin, 0);
    ad::Var c = ad::activation(z, ad::Activation::sin, 1);
    return ad::concat_cols(T, ad::concat_cols(s, c));
  }

  Architecture arch_;
  Vector params_;
  std::uint64_t seed_ = 0;
};

}  // namespace vpfb

#endif  // VPFB_ENERGY_MODEL_HPP
