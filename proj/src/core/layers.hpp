#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ops.hpp"

namespace hgr {

/// Flat view of a model's named parameters and state buffers (batch-norm
/// running statistics). Drives the optimizer, checkpoints, freezing and
/// parameter accounting.
template <typename T>
struct Registry {
  struct BufferEntry {
    std::string name;
    Tensor<T>* tensor = nullptr;
    BatchNormState<T>* bn = nullptr;  // owner, marked trained on load
  };

  std::vector<Variable<T>*> params;
  std::vector<BufferEntry> buffers;

  void add(Variable<T>& v) { params.push_back(&v); }
  void add_buffer(std::string name, Tensor<T>& t, BatchNormState<T>* bn) {
    buffers.push_back(BufferEntry{std::move(name), &t, bn});
  }

  Variable<T>* find(const std::string& name) const {
    for (Variable<T>* v : params)
      if (v->name == name) return v;
    return nullptr;
  }

  void zero_grads() {
    for (Variable<T>* v : params) v->zero_grad();
  }

  std::int64_t count(bool trainable_only) const {
    std::int64_t n = 0;
    for (const Variable<T>* v : params)
      if (!trainable_only || v->trainable) n += v->value.size();
    return n;
  }

  std::int64_t buffer_count() const {
    std::int64_t n = 0;
    for (const auto& b : buffers) n += b.tensor->size();
    return n;
  }

  /// Marks every parameter whose name starts with `prefix` (all when empty).
  void set_trainable(const std::string& prefix, bool trainable) {
    for (Variable<T>* v : params)
      if (v->name.rfind(prefix, 0) == 0) v->trainable = trainable;
  }
};

/// He-style initialization: zero-mean normal with variance 2/fan_in.
template <typename T>
void init_he_normal(Variable<T>& v, std::int64_t fan_in, Rng& rng);

template <typename T>
class Conv2dLayer {
 public:
  Conv2dLayer(std::string name, int kh, int kw, int cin, int cout,
              ConvSpec spec, bool with_bias = true);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x);
  void collect(Registry<T>& reg);

  Variable<T> weight;
  Variable<T> bias;
  ConvSpec spec;
  bool with_bias;
};

template <typename T>
class BatchNormLayer {
 public:
  BatchNormLayer(std::string name, int channels, T momentum = T(0.99),
                 T epsilon = T(1e-3));

  TapeRef forward(Tape<T>& tape, TapeRef x, Mode mode);
  void collect(Registry<T>& reg);

  Variable<T> gamma;
  Variable<T> beta;
  BatchNormState<T> state;
  T momentum, epsilon;
  std::string name;
};

template <typename T>
class DenseLayer {
 public:
  DenseLayer(std::string name, int din, int dout);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x);
  void collect(Registry<T>& reg);

  Variable<T> weight;  // stored (1, 1, Din, Dout)
  Variable<T> bias;
};

/// Stateless apart from its rate, which training steps reconfigure.
template <typename T>
class DropoutLayer {
 public:
  explicit DropoutLayer(double rate) : rate(rate) {}
  TapeRef forward(Tape<T>& tape, TapeRef x, Mode mode, Rng* rng) {
    if (mode == Mode::eval || rate == 0.0) return x;
    if (!rng) throw ConfigError("dropout: train mode needs an rng");
    return dropout(tape, x, rate, mode, *rng);
  }
  double rate;
};

}  // namespace hgr
