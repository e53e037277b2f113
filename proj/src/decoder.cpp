// Copyright Contributors to the o2v project
// SPDX-License-Identifier: Apache-2.0

#include "o2v/decoder.hpp"

#include <cmath>
#include <random>

namespace o2v {
namespace {

template <typename Derived>
auto softplus(const Eigen::ArrayBase<Derived>& z) {
  return z.max(typename Derived::Scalar(0)) + (-z.abs()).exp().log1p();
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& z) {
  using S = typename Derived::Scalar;
  return S(1) / (S(1) + (-z).exp());
}

}  // namespace

Eigen::VectorXd encode_position(const PositionalEncoding& pe, const Vec3& p) {
  Eigen::VectorXd out(pe.dim());
  pe.encode(p, out);
  return out;
}

template <typename Scalar>
MlpParams<Scalar> MlpParams<Scalar>::zeros_like() const {
  MlpParams out;
  for (const auto& w : weights) out.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const auto& b : biases) out.biases.push_back(Vector::Zero(b.size()));
  return out;
}

template <typename Scalar>
Eigen::Index MlpParams<Scalar>::size() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
  return n;
}

template <typename Scalar>
Scalar& MlpParams<Scalar>::flat(Eigen::Index i) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (i < weights[l].size()) return weights[l].data()[i];
    i -= weights[l].size();
    if (i < biases[l].size()) return biases[l][i];
    i -= biases[l].size();
  }
  throw std::out_of_range("MlpParams::flat: index out of range");
}

template <typename Scalar>
Scalar MlpParams<Scalar>::flat(Eigen::Index i) const {
  return const_cast<MlpParams*>(this)->flat(i);
}

template <typename Scalar>
bool MlpParams<Scalar>::all_finite() const {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (!weights[l].allFinite() || !biases[l].allFinite()) return false;
  }
  return true;
}

template <typename Scalar>
Mlp<Scalar>::Mlp(LayerSpec spec, std::uint64_t seed, bool zero_output_layer) : spec_(std::move(spec)) {
  std::mt19937_64 rng(seed);
  int fan_in = spec_.input;
  std::vector<int> widths = spec_.hidden;
  widths.push_back(spec_.output);
  for (std::size_t l = 0; l < widths.size(); ++l) {
    const int fan_out = widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    Vector b(fan_out);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<Scalar>(dist(rng));
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<Scalar>(dist(rng));
    if (zero_output_layer && l + 1 == widths.size()) {
      w.setZero();
      b.setZero();
    }
    params_.weights.push_back(std::move(w));
    params_.biases.push_back(std::move(b));
    fan_in = fan_out;
  }
}

template <typename Scalar>
Mlp<Scalar>::Mlp(LayerSpec spec, Params params) : spec_(std::move(spec)), params_(std::move(params)) {
  if (params_.weights.size() != spec_.hidden.size() + 1 || params_.biases.size() != params_.weights.size()) {
    throw InputError("Mlp: parameter count does not match layer spec");
  }
  int fan_in = spec_.input;
  for (std::size_t l = 0; l < params_.weights.size(); ++l) {
    const int fan_out = l < spec_.hidden.size() ? spec_.hidden[l] : spec_.output;
    if (params_.weights[l].rows() != fan_out || params_.weights[l].cols() != fan_in ||
        params_.biases[l].size() != fan_out) {
      throw InputError("Mlp: tensor shape does not match layer spec");
    }
    fan_in = fan_out;
  }
}

template <typename Scalar>
typename Mlp<Scalar>::Matrix Mlp<Scalar>::forward(const Matrix& x, Cache* cache) const {
  if (x.rows() != spec_.input) throw InputError("Mlp::forward: input dimension mismatch");
  if (!x.allFinite()) throw NumericError("Mlp::forward: non-finite input");
  const std::size_t layers = params_.weights.size();
  if (cache != nullptr) {
    cache->pre.resize(layers);
    cache->act.resize(layers + 1);
    cache->act[0] = x;
  }
  Matrix a = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Matrix z = params_.weights[l] * a;
    z.colwise() += params_.biases[l];
    const bool last = l + 1 == layers;
    if (!last) {
      a = spec_.hidden_activation == Activation::kSoftplus ? Matrix(softplus(z.array()).matrix()) : z;
    } else {
      a = spec_.output_activation == OutputActivation::kSigmoid ? Matrix(sigmoid(z.array()).matrix()) : z;
    }
    if (cache != nullptr) {
      cache->pre[l] = std::move(z);
      cache->act[l + 1] = a;
    }
  }
  return a;
}

template <typename Scalar>
void Mlp<Scalar>::backward(const Cache& cache, const Matrix& d_out, Params& grad, Matrix* d_input) const {
  const std::size_t layers = params_.weights.size();
  Matrix delta;
  if (spec_.output_activation == OutputActivation::kSigmoid) {
    const auto& y = cache.act[layers].array();
    delta = (d_out.array() * y * (Scalar(1) - y)).matrix();
  } else {
    delta = d_out;
  }
  for (std::size_t l = layers; l-- > 0;) {
    grad.weights[l].noalias() += delta * cache.act[l].transpose();
    grad.biases[l].noalias() += delta.rowwise().sum();
    if (l == 0 && d_input == nullptr) break;
    Matrix upstream = params_.weights[l].transpose() * delta;
    if (l == 0) {
      *d_input = std::move(upstream);
      break;
    }
    if (spec_.hidden_activation == Activation::kSoftplus) {
      delta = (upstream.array() * sigmoid(cache.pre[l - 1].array())).matrix();
    } else {
      delta = std::move(upstream);
    }
  }
}

template <typename Scalar>
Decoders<Scalar> make_decoders(int geo_dim, int color_dim, int pe_bands, int hidden_width, int hidden_layers,
                               std::uint64_t seed, bool zero_output_layer) {
  Decoders<Scalar> dec;
  dec.encoding.bands = pe_bands;
  LayerSpec occ{dec.input_dim(geo_dim), std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_width), 1};
  LayerSpec col{dec.input_dim(color_dim), std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_width), 3};
  dec.occupancy = Mlp<Scalar>(occ, seed, zero_output_layer);
  dec.color = Mlp<Scalar>(col, seed ^ 0x9e3779b97f4a7c15ULL, zero_output_layer);
  return dec;
}

namespace {

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> decoder_input(const PositionalEncoding& pe, const Vec3& p,
                                                                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& phi) {
  if (!p.allFinite() || !phi.allFinite()) throw NumericError("decode: non-finite input");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> x(pe.dim() + phi.size(), 1);
  pe.encode(p, x.col(0).head(pe.dim()));
  x.col(0).tail(phi.size()) = phi;
  return x;
}

}  // namespace

template <typename Scalar>
Scalar decode_occupancy(const Decoders<Scalar>& dec, const Vec3& p_normalized,
                        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& phi_d) {
  return dec.occupancy.forward(decoder_input(dec.encoding, p_normalized, phi_d))(0, 0);
}

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 1> decode_color(const Decoders<Scalar>& dec, const Vec3& p_normalized,
                                         const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& phi_c) {
  return dec.color.forward(decoder_input(dec.encoding, p_normalized, phi_c)).col(0);
}

template struct MlpParams<float>;
template struct MlpParams<double>;
template class Mlp<float>;
template class Mlp<double>;
template Decoders<float> make_decoders<float>(int, int, int, int, int, std::uint64_t, bool);
template Decoders<double> make_decoders<double>(int, int, int, int, int, std::uint64_t, bool);
template float decode_occupancy(const Decoders<float>&, const Vec3&, const Eigen::VectorXf&);
template double decode_occupancy(const Decoders<double>&, const Vec3&, const Eigen::VectorXd&);
template Eigen::Vector3f decode_color(const Decoders<float>&, const Vec3&, const Eigen::VectorXf&);
template Eigen::Vector3d decode_color(const Decoders<double>&, const Vec3&, const Eigen::VectorXd&);

}  // namespace o2v
