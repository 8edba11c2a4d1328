#include "omniscan/blocks/abmlp.hpp"

#include <algorithm>

namespace omniscan::blocks {

template <typename T>
Abmlp<T>::Abmlp(std::size_t channels, std::mt19937_64& rng, std::size_t ratio) : channels_(channels) {
  if (channels == 0 || ratio == 0) throw ShapeError("ABMLP: channels and ratio must be positive");
  const std::size_t hidden = std::max<std::size_t>(1, channels / ratio);
  fc1 = Linear<T>(channels, hidden, rng);
  fc2 = Linear<T>(hidden, hidden, rng);
  fc3 = Linear<T>(hidden, channels, rng);
}

template <typename T>
Var<T> Abmlp<T>::weights(const Var<T>& x) const {
  if (x.shape().size() != 4 || x.dim(1) != channels_)
    throw ShapeError("ABMLP: expected " + std::to_string(channels_) + " channels on axis 1, got " +
                     shape_str(x.shape()));
  auto h = ops::relu(fc1.forward(ops::global_avg_pool(x)));
  h = ops::relu(fc2.forward(h));
  return ops::sigmoid(fc3.forward(h));
}

template <typename T>
Var<T> Abmlp<T>::forward(const Var<T>& x) const {
  auto y = ops::reshape(weights(x), {x.dim(0), channels_, 1, 1});
  return ops::mul(x, y);
}

template <typename T>
void Abmlp<T>::collect(const std::string& prefix, ParamList<T>& out) {
  fc1.collect(join_name(prefix, "fc1"), out);
  fc2.collect(join_name(prefix, "fc2"), out);
  fc3.collect(join_name(prefix, "fc3"), out);
}

template <typename T>
Frm<T>::Frm(std::size_t channels, std::mt19937_64& rng) {
  if (channels < 2 || channels % 2)
    throw ShapeError("FRM: channel count must be even, got " + std::to_string(channels));
  compress = Pointwise<T>(channels, channels / 2, rng, false);
  attention = Abmlp<T>(channels / 2, rng);
  restore = Pointwise<T>(channels / 2, channels, rng);
}

template <typename T>
Var<T> Frm<T>::forward(const Var<T>& x) const {
  return restore.forward(attention.forward(ops::silu(compress.forward(x))));
}

template <typename T>
void Frm<T>::collect(const std::string& prefix, ParamList<T>& out) {
  compress.collect(join_name(prefix, "compress"), out);
  attention.collect(join_name(prefix, "attention"), out);
  restore.collect(join_name(prefix, "restore"), out);
}

template class Abmlp<float>;
template class Abmlp<double>;
template class Frm<float>;
template class Frm<double>;

}  // namespace omniscan::blocks
