#include "layers.hpp"

#include <cmath>

namespace hgr {

template <typename T>
void init_he_normal(Variable<T>& v, std::int64_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < v.value.size(); ++i)
    v.value[i] = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
Conv2dLayer<T>::Conv2dLayer(std::string name, int kh, int kw, int cin,
                            int cout, ConvSpec spec_, bool with_bias_)
    : weight(name + ".w", Tensor<T>(Shape4{kh, kw, cin, cout})),
      bias(name + ".b", Tensor<T>(Shape4{1, 1, 1, cout})),
      spec(spec_),
      with_bias(with_bias_) {}

template <typename T>
void Conv2dLayer<T>::init(Rng& rng) {
  const Shape4 ks = weight.value.shape();
  init_he_normal(weight, ks.n * ks.h * ks.w, rng);
  bias.value.zero();
}

template <typename T>
TapeRef Conv2dLayer<T>::forward(Tape<T>& tape, TapeRef x) {
  return conv2d(tape, x, weight, with_bias ? &bias : nullptr, spec);
}

template <typename T>
void Conv2dLayer<T>::collect(Registry<T>& reg) {
  reg.add(weight);
  if (with_bias) reg.add(bias);
}

template <typename T>
BatchNormLayer<T>::BatchNormLayer(std::string name_, int channels, T momentum_,
                                  T epsilon_)
    : gamma(name_ + ".gamma", Tensor<T>::full(Shape4{1, 1, 1, channels}, T(1))),
      beta(name_ + ".beta", Tensor<T>(Shape4{1, 1, 1, channels})),
      state(channels),
      momentum(momentum_),
      epsilon(epsilon_),
      name(std::move(name_)) {}

template <typename T>
TapeRef BatchNormLayer<T>::forward(Tape<T>& tape, TapeRef x, Mode mode) {
  return batch_norm(tape, x, gamma, beta, state, mode, momentum, epsilon);
}

template <typename T>
void BatchNormLayer<T>::collect(Registry<T>& reg) {
  reg.add(gamma);
  reg.add(beta);
  reg.add_buffer(name + ".running_mean", state.running_mean, &state);
  reg.add_buffer(name + ".running_var", state.running_var, &state);
}

template <typename T>
DenseLayer<T>::DenseLayer(std::string name, int din, int dout)
    : weight(name + ".w", Tensor<T>(Shape4{1, 1, din, dout})),
      bias(name + ".b", Tensor<T>(Shape4{1, 1, 1, dout})) {}

template <typename T>
void DenseLayer<T>::init(Rng& rng) {
  init_he_normal(weight, weight.value.shape().w, rng);
  bias.value.zero();
}

template <typename T>
TapeRef DenseLayer<T>::forward(Tape<T>& tape, TapeRef x) {
  return dense(tape, x, weight, bias);
}

template <typename T>
void DenseLayer<T>::collect(Registry<T>& reg) {
  reg.add(weight);
  reg.add(bias);
}

#define HGR_INSTANTIATE_LAYERS(T)                                     \
  template void init_he_normal<T>(Variable<T>&, std::int64_t, Rng&);  \
  template class Conv2dLayer<T>;                                      \
  template class BatchNormLayer<T>;                                   \
  template class DenseLayer<T>;

HGR_INSTANTIATE_LAYERS(float)
HGR_INSTANTIATE_LAYERS(double)

#undef HGR_INSTANTIATE_LAYERS

}  // namespace hgr
