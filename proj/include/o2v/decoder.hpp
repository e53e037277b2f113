// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0
//
// Small fully connected decoders for occupancy and color, evaluated column-batched
// (one sample per column) with an explicit reverse pass.

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "o2v/camera.hpp"

namespace o2v {

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^{L-1} pi p), cos(2^{L-1} pi p)]
struct PositionalEncoding {
  int bands = 4;

  [[nodiscard]] int dim() const { return 3 + 6 * bands; }

  template <typename Derived>
  void encode(const Vec3& p, Eigen::MatrixBase<Derived> const& out_const) const {
    auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_const);
    using S = typename Derived::Scalar;
    out.template head<3>() = p.cast<S>();
    for (int a = 0; a < 3; ++a) {
      // Double-angle recurrence: one sin/cos pair per axis.
      double s = std::sin(3.14159265358979323846 * p[a]);
      double c = std::cos(3.14159265358979323846 * p[a]);
      for (int l = 0; l < bands; ++l) {
        out(3 + 6 * l + a) = static_cast<S>(s);
        out(6 + 6 * l + a) = static_cast<S>(c);
        const double s2 = 2.0 * s * c;
        c = (c - s) * (c + s);
        s = s2;
      }
    }
  }
};

/// Convenience wrapper returning a fresh vector.
Eigen::VectorXd encode_position(const PositionalEncoding& pe, const Vec3& p);

enum class Activation { kSoftplus, kIdentity };
enum class OutputActivation { kSigmoid, kIdentity };

struct LayerSpec {
  int input = 0;
  std::vector<int> hidden;
  int output = 1;
  Activation hidden_activation = Activation::kSoftplus;
  OutputActivation output_activation = OutputActivation::kSigmoid;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

template <typename Scalar>
struct MlpParams {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;  ///< weights[l] is out_l x in_l
  std::vector<Vector> biases;

  [[nodiscard]] MlpParams zeros_like() const;
  [[nodiscard]] Eigen::Index size() const;
  /// Flat view across all tensors, weights then bias per layer.
  Scalar& flat(Eigen::Index i);
  [[nodiscard]] Scalar flat(Eigen::Index i) const;
  [[nodiscard]] bool all_finite() const;
};

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Params = MlpParams<Scalar>;

  /// Activations kept by forward() for backward(). act[0] is the input, act.back() the output.
  struct Cache {
    std::vector<Matrix> pre;
    std::vector<Matrix> act;
  };

  Mlp() = default;
  /// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; optionally zero output layer.
  Mlp(LayerSpec spec, std::uint64_t seed, bool zero_output_layer = false);
  Mlp(LayerSpec spec, Params params);

  [[nodiscard]] const LayerSpec& spec() const { return spec_; }
  [[nodiscard]] const Params& params() const { return params_; }
  Params& params() { return params_; }

  /// x is input x N; returns output x N.
  Matrix forward(const Matrix& x, Cache* cache = nullptr) const;
  /// `d_out` is dL/d(output) (output x N). Accumulates parameter gradients into `grad`
  /// and writes dL/dx into `d_input` when non-null.
  void backward(const Cache& cache, const Matrix& d_out, Params& grad, Matrix* d_input = nullptr) const;

  template <typename Other>
  [[nodiscard]] Mlp<Other> cast() const {
    typename Mlp<Other>::Params p;
    for (const auto& w : params_.weights) p.weights.push_back(w.template cast<Other>());
    for (const auto& b : params_.biases) p.biases.push_back(b.template cast<Other>());
    return Mlp<Other>(spec_, std::move(p));
  }

 private:
  LayerSpec spec_;
  Params params_;
};

/// The occupancy decoder f_d and color decoder f_c, both fed [encoded p, feature].
template <typename Scalar>
struct Decoders {
  PositionalEncoding encoding;
  Mlp<Scalar> occupancy;
  Mlp<Scalar> color;

  [[nodiscard]] int input_dim(int feature_dim) const { return encoding.dim() + feature_dim; }

  template <typename Other>
  [[nodiscard]] Decoders<Other> cast() const {
    return {encoding, occupancy.template cast<Other>(), color.template cast<Other>()};
  }
};

/// Builds decoders with the default topology (hidden_layers x hidden_width, softplus).
/// Output layers start at zero so an untrained map decodes 0.5 everywhere.
template <typename Scalar>
Decoders<Scalar> make_decoders(int geo_dim, int color_dim, int pe_bands, int hidden_width, int hidden_layers,
                               std::uint64_t seed, bool zero_output_layer = true);

/// o_p for a normalized point and its geometry feature.
template <typename Scalar>
Scalar decode_occupancy(const Decoders<Scalar>& dec, const Vec3& p_normalized,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& phi_d);

/// c_p in [0,1]^3 for a normalized point and its color feature.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> decode_color(const Decoders<Scalar>& dec, const Vec3& p_normalized,
                                         const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& phi_c);

extern template struct MlpParams<float>;
extern template struct MlpParams<double>;
extern template class Mlp<float>;
extern template class Mlp<double>;

}  // namespace o2v
