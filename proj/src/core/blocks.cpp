#include "blocks.hpp"

namespace hgr {

template <typename T>
ResidualUnit<T>::ResidualUnit(const std::string& name, ResidualUnitSpec spec)
    : spec_(spec),
      bn1_(name + ".bn1", spec.in_channels),
      conv1_(name + ".conv1", 1, 1, spec.in_channels, spec.bottleneck_channels,
             ConvSpec{spec.stride, 1, Pad::same}),
      bn2_(name + ".bn2", spec.bottleneck_channels),
      conv2_(name + ".conv2", 3, 3, spec.bottleneck_channels,
             spec.bottleneck_channels, ConvSpec{1, 1, Pad::same}),
      bn3_(name + ".bn3", spec.bottleneck_channels),
      conv3_(name + ".conv3", 1, 1, spec.bottleneck_channels,
             spec.out_channels, ConvSpec{1, 1, Pad::same}) {
  if (spec.out_channels != 4 * spec.bottleneck_channels)
    throw ConfigError("residual unit: restore width must be 4x bottleneck, "
                      "got " +
                      std::to_string(spec.out_channels) + " vs bottleneck " +
                      std::to_string(spec.bottleneck_channels));
  if (spec.needs_projection())
    proj_.emplace(name + ".proj", 1, 1, spec.in_channels, spec.out_channels,
                  ConvSpec{spec.stride, 1, Pad::same});
}

template <typename T>
void ResidualUnit<T>::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_.init(rng);
  if (proj_) proj_->init(rng);
}

template <typename T>
TapeRef ResidualUnit<T>::forward(Tape<T>& tape, TapeRef x, Mode mode) {
  if (tape.value(x).shape().c != spec_.in_channels)
    throw ShapeError("residual unit: expected " +
                     std::to_string(spec_.in_channels) + " input channels, "
                     "got " + std::to_string(tape.value(x).shape().c));
  TapeRef h = bn1_.forward(tape, x, mode);
  h = relu(tape, h);
  h = conv1_.forward(tape, h);
  h = bn2_.forward(tape, h, mode);
  h = relu(tape, h);
  h = conv2_.forward(tape, h);
  h = bn3_.forward(tape, h, mode);
  h = relu(tape, h);
  h = conv3_.forward(tape, h);
  const TapeRef shortcut = proj_ ? proj_->forward(tape, x) : x;
  return add(tape, shortcut, h);
}

template <typename T>
void ResidualUnit<T>::collect(Registry<T>& reg) {
  bn1_.collect(reg);
  conv1_.collect(reg);
  bn2_.collect(reg);
  conv2_.collect(reg);
  bn3_.collect(reg);
  conv3_.collect(reg);
  if (proj_) proj_->collect(reg);
}

template <typename T>
ResGroup<T>::ResGroup(const std::string& name, int in_channels,
                      int bottleneck_channels, int out_channels, int stride,
                      bool always_project) {
  units_.reserve(kUnitCount);
  for (int u = 0; u < kUnitCount; ++u) {
    ResidualUnitSpec spec;
    spec.in_channels = u == 0 ? in_channels : out_channels;
    spec.bottleneck_channels = bottleneck_channels;
    spec.out_channels = out_channels;
    spec.stride = u == 0 ? stride : 1;
    spec.always_project = always_project;
    units_.emplace_back(name + ".u" + std::to_string(u + 1), spec);
  }
}

template <typename T>
void ResGroup<T>::init(Rng& rng) {
  for (auto& u : units_) u.init(rng);
}

template <typename T>
TapeRef ResGroup<T>::forward(Tape<T>& tape, TapeRef x, Mode mode) {
  for (auto& u : units_) x = u.forward(tape, x, mode);
  return x;
}

template <typename T>
void ResGroup<T>::collect(Registry<T>& reg) {
  for (auto& u : units_) u.collect(reg);
}

template <typename T>
AsppModule<T>::AsppModule(const std::string& name, int in_channels) {
  branches_.reserve(kBranches);
  branches_.emplace_back(name + ".b0", 1, 1, in_channels, kFiltersPerBranch,
                         ConvSpec{1, 1, Pad::same});
  const int rates[] = {3, 6, 12, 18};
  for (int i = 0; i < 4; ++i)
    branches_.emplace_back(name + ".b" + std::to_string(i + 1), 3, 3,
                           in_channels, kFiltersPerBranch,
                           ConvSpec{1, rates[i], Pad::same});
}

template <typename T>
void AsppModule<T>::init(Rng& rng) {
  for (auto& b : branches_) b.init(rng);
}

template <typename T>
TapeRef AsppModule<T>::forward(Tape<T>& tape, TapeRef x) {
  std::vector<TapeRef> outs;
  outs.reserve(branches_.size());
  for (auto& b : branches_) outs.push_back(relu(tape, b.forward(tape, x)));
  return concat_channels(tape, outs);
}

template <typename T>
void AsppModule<T>::collect(Registry<T>& reg) {
  for (auto& b : branches_) b.collect(reg);
}

template <typename T>
std::int64_t AsppModule<T>::parameter_count(int in_channels) {
  const std::int64_t f = kFiltersPerBranch;
  return f * in_channels + 4 * f * 9 * in_channels + kBranches * f;
}

template <typename T>
StreamBody<T>::StreamBody(const std::string& name, int in_channels)
    : conv1_(name + ".conv1", 3, 3, in_channels, 16, ConvSpec{1, 1, Pad::valid}),
      conv2_(name + ".conv2", 3, 3, 16, 32, ConvSpec{1, 1, Pad::valid}),
      conv3_(name + ".conv3", 3, 3, 32, 64, ConvSpec{1, 1, Pad::valid}),
      conv4_(name + ".conv4", 3, 3, 64, 128, ConvSpec{1, 1, Pad::valid}),
      fc1_(name + ".fc1", 128, kFeatureWidth),
      fc2_(name + ".fc2", kFeatureWidth, kFeatureWidth) {}

template <typename T>
void StreamBody<T>::init(Rng& rng) {
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_.init(rng);
  conv4_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

template <typename T>
TapeRef StreamBody<T>::forward(Tape<T>& tape, TapeRef x, Mode mode, Rng* rng) {
  TapeRef h = relu(tape, conv1_.forward(tape, x));
  h = max_pool2d(tape, h, 3, 3);
  h = relu(tape, conv2_.forward(tape, h));
  h = max_pool2d(tape, h, 3, 3);
  h = relu(tape, conv3_.forward(tape, h));
  h = max_pool2d(tape, h, 3, 3);
  h = relu(tape, conv4_.forward(tape, h));
  h = global_avg_pool(tape, h);
  h = drop_pre_fc1_.forward(tape, h, mode, rng);
  h = relu(tape, fc1_.forward(tape, h));
  h = drop_post_fc1_.forward(tape, h, mode, rng);
  return fc2_.forward(tape, h);
}

template <typename T>
void StreamBody<T>::collect(Registry<T>& reg) {
  conv1_.collect(reg);
  conv2_.collect(reg);
  conv3_.collect(reg);
  conv4_.collect(reg);
  fc1_.collect(reg);
  fc2_.collect(reg);
}

#define HGR_INSTANTIATE_BLOCKS(T) \
  template class ResidualUnit<T>; \
  template class ResGroup<T>;     \
  template class AsppModule<T>;   \
  template class StreamBody<T>;

HGR_INSTANTIATE_BLOCKS(float)
HGR_INSTANTIATE_BLOCKS(double)

#undef HGR_INSTANTIATE_BLOCKS

}  // namespace hgr
