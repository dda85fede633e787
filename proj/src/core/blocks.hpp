#pragma once

#include <memory>
#include <optional>

#include "layers.hpp"

namespace hgr {

/// Geometry of one bottleneck residual unit. The restore width is always
/// four times the bottleneck width (8->32, 16->64, 32->128).
struct ResidualUnitSpec {
  int in_channels;
  int bottleneck_channels;
  int out_channels;
  int stride = 1;
  /// Identity shortcut when stride == 1 and channels match, projection
  /// otherwise. `always_project` forces a 1x1 projection on every unit,
  /// which is how the published model sizes come out.
  bool always_project = false;

  bool needs_projection() const {
    return always_project || stride != 1 || in_channels != out_channels;
  }
};

/// Pre-activation bottleneck: y = shortcut(x) + conv1x1(relu(bn(
/// conv3x3(relu(bn(conv1x1(relu(bn(x)))))))). The first 1x1 carries the
/// stride.
template <typename T>
class ResidualUnit {
 public:
  ResidualUnit(const std::string& name, ResidualUnitSpec spec);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x, Mode mode);
  void collect(Registry<T>& reg);

  const ResidualUnitSpec& spec() const { return spec_; }

 private:
  ResidualUnitSpec spec_;
  BatchNormLayer<T> bn1_;
  Conv2dLayer<T> conv1_;  // 1x1 reduce, carries the stride
  BatchNormLayer<T> bn2_;
  Conv2dLayer<T> conv2_;  // 3x3
  BatchNormLayer<T> bn3_;
  Conv2dLayer<T> conv3_;  // 1x1 restore
  std::optional<Conv2dLayer<T>> proj_;
};

/// Three stacked residual units; the first applies the group's stride and
/// channel change, the rest preserve shape.
template <typename T>
class ResGroup {
 public:
  ResGroup(const std::string& name, int in_channels, int bottleneck_channels,
           int out_channels, int stride, bool always_project);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x, Mode mode);
  void collect(Registry<T>& reg);

  static constexpr int kUnitCount = 3;

 private:
  std::vector<ResidualUnit<T>> units_;
};

/// Five parallel branches over the trunk output: a 1x1 convolution and four
/// 3x3 convolutions at dilation rates 3, 6, 12 and 18, each with 32 filters,
/// bias and ReLU, concatenated to 160 channels.
template <typename T>
class AsppModule {
 public:
  AsppModule(const std::string& name, int in_channels);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x);
  void collect(Registry<T>& reg);

  static constexpr int kBranches = 5;
  static constexpr int kFiltersPerBranch = 32;
  static constexpr int out_channels() { return kBranches * kFiltersPerBranch; }

  /// Closed-form parameter count (weights and biases of the five branches).
  static std::int64_t parameter_count(int in_channels);

 private:
  std::vector<Conv2dLayer<T>> branches_;
};

/// The recognition-stage CNN body: four valid 3x3 convolutions with 3x3/3
/// max pooling between them, global average pooling, then fc1 and fc2 with
/// dropout around fc1. Output is the 64-wide fc2 feature vector.
template <typename T>
class StreamBody {
 public:
  StreamBody(const std::string& name, int in_channels);

  void init(Rng& rng);
  TapeRef forward(Tape<T>& tape, TapeRef x, Mode mode, Rng* rng);
  void collect(Registry<T>& reg);

  void set_dropout_rates(double before_fc1, double after_fc1) {
    drop_pre_fc1_.rate = before_fc1;
    drop_post_fc1_.rate = after_fc1;
  }

  static constexpr int kFeatureWidth = 64;

 private:
  Conv2dLayer<T> conv1_, conv2_, conv3_, conv4_;
  DropoutLayer<T> drop_pre_fc1_{0.20};   // between pooling and fc1
  DenseLayer<T> fc1_;
  DropoutLayer<T> drop_post_fc1_{0.30};  // after fc1
  DenseLayer<T> fc2_;
};

}  // namespace hgr
