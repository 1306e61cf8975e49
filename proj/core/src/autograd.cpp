#include "styleforge/autograd.hpp"

#include <memory>

#include "styleforge/error.hpp"

namespace styleforge {

template <typename T>
auto Tape<T>::node(Var v) const -> const Node& {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw InvalidArgument("tape: variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

template <typename T>
auto Tape<T>::node(Var v) -> Node& {
  return const_cast<Node&>(std::as_const(*this).node(v));
}

template <typename T>
Var Tape<T>::input(BasicTensor<T> value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::record(BasicTensor<T> value, std::vector<Var> inputs, Backward backward) {
  Node n;
  n.value = std::move(value);
  for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var v) const {
  return node(v).value;
}

template <typename T>
const BasicTensor<T>& Tape<T>::grad(Var v) const {
  return node(v).grad;
}

template <typename T>
bool Tape<T>::requires_grad(Var v) const {
  return node(v).requires_grad;
}

template <typename T>
void Tape<T>::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar, got shape " +
                          root.value.shape().str());
  }
  for (Node& n : nodes_) n.grad = BasicTensor<T>();
  if (!root.requires_grad) return;
  root.grad = BasicTensor<T>(root.value.shape(), T(1));

  std::vector<BasicTensor<T>*> targets;
  for (std::size_t i = static_cast<std::size_t>(loss.id) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    targets.assign(n.inputs.size(), nullptr);
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      Node& in = nodes_[static_cast<std::size_t>(n.inputs[k].id)];
      if (!in.requires_grad) continue;
      if (in.grad.empty()) in.grad = BasicTensor<T>(in.value.shape());
      targets[k] = &in.grad;
    }
    n.backward(n.grad, targets);
  }
}

template <typename T>
Var Tape<T>::conv2d(Var x, Var weight, Var bias, int stride, Padding padding) {
  BasicTensor<T> out =
      styleforge::conv2d(value(x), value(weight), value(bias), stride, padding);
  return record(std::move(out), {x, weight, bias},
                [this, x, weight, stride, padding](const BasicTensor<T>& g,
                                                   std::span<BasicTensor<T>* const> gi) {
                  conv2d_backward(value(x), value(weight), stride, padding, g, gi[0], gi[1],
                                  gi[2]);
                });
}

template <typename T>
Var Tape<T>::instance_norm(Var x, Var gamma, Var beta, T eps) {
  auto cache = std::make_shared<InstanceNormCache<T>>();
  BasicTensor<T> out = styleforge::instance_norm(value(x), value(gamma).data(),
                                                 value(beta).data(), eps, cache.get());
  return record(std::move(out), {x, gamma, beta},
                [this, gamma, cache](const BasicTensor<T>& g,
                                     std::span<BasicTensor<T>* const> gi) {
                  instance_norm_backward(*cache, value(gamma).data(), g, gi[0], gi[1], gi[2]);
                });
}

template <typename T>
Var Tape<T>::relu(Var x) {
  return record(styleforge::relu(value(x)), {x},
                [this, x](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  relu_backward(value(x), g, *gi[0]);
                });
}

template <typename T>
Var Tape<T>::upsample_nearest(Var x, int factor) {
  return record(styleforge::upsample_nearest(value(x), factor), {x},
                [factor](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  upsample_nearest_backward(g, factor, *gi[0]);
                });
}

template <typename T>
Var Tape<T>::max_pool2(Var x) {
  return record(styleforge::max_pool2(value(x)), {x},
                [this, x](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  max_pool2_backward(value(x), g, *gi[0]);
                });
}

namespace {

template <typename T>
void expect_same(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                          b.shape().str());
  }
}

}  // namespace

template <typename T>
Var Tape<T>::add(Var a, Var b) {
  expect_same(value(a), value(b), "add");
  BasicTensor<T> out = value(a);
  const BasicTensor<T>& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
  return record(std::move(out), {a, b},
                [](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  for (BasicTensor<T>* t : gi) {
                    if (!t) continue;
                    for (std::size_t i = 0; i < g.size(); ++i) (*t)[i] += g[i];
                  }
                });
}

template <typename T>
Var Tape<T>::sub(Var a, Var b) {
  expect_same(value(a), value(b), "sub");
  BasicTensor<T> out = value(a);
  const BasicTensor<T>& vb = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
  return record(std::move(out), {a, b},
                [](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  if (gi[0])
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += g[i];
                  if (gi[1])
                    for (std::size_t i = 0; i < g.size(); ++i) (*gi[1])[i] -= g[i];
                });
}

template <typename T>
Var Tape<T>::scale(Var a, T factor) {
  BasicTensor<T> out = value(a);
  for (T& v : out.data()) v *= factor;
  return record(std::move(out), {a},
                [factor](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += factor * g[i];
                });
}

template <typename T>
Var Tape<T>::square(Var a) {
  BasicTensor<T> out = value(a);
  for (T& v : out.data()) v *= v;
  return record(std::move(out), {a},
                [this, a](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  const BasicTensor<T>& x = value(a);
                  for (std::size_t i = 0; i < g.size(); ++i) (*gi[0])[i] += T(2) * x[i] * g[i];
                });
}

template <typename T>
Var Tape<T>::mul(Var a, const BasicTensor<T>& constant) {
  const BasicTensor<T>& x = value(a);
  const Shape& s = x.shape();
  const Shape& m = constant.shape();
  if (m.n != s.n || m.h != s.h || m.w != s.w || (m.c != s.c && m.c != 1)) {
    throw InvalidArgument("mul: constant shape " + m.str() + " not broadcastable to " + s.str());
  }
  auto factor = std::make_shared<BasicTensor<T>>(constant);
  auto index = [s, m](std::size_t i) {
    if (m.c == s.c) return i;
    const std::size_t plane = s.plane();
    const std::size_t n = i / (plane * s.c);
    return n * plane + i % plane;
  };
  BasicTensor<T> out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*factor)[index(i)];
  return record(std::move(out), {a},
                [factor, index](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  for (std::size_t i = 0; i < g.size(); ++i)
                    (*gi[0])[i] += (*factor)[index(i)] * g[i];
                });
}

template <typename T>
Var Tape<T>::channel_affine(Var x, std::span<const T> shift, std::span<const T> factor) {
  const BasicTensor<T>& v = value(x);
  const auto channels = static_cast<std::size_t>(v.c());
  if (shift.size() != channels || factor.size() != channels) {
    throw InvalidArgument("channel_affine: per-channel constants must match channel count");
  }
  std::vector<T> f(factor.begin(), factor.end());
  BasicTensor<T> out = v;
  const std::size_t plane = v.shape().plane();
  for (int n = 0; n < v.n(); ++n)
    for (int c = 0; c < v.c(); ++c) {
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - shift[c]) * factor[c];
    }
  return record(std::move(out), {x},
                [f = std::move(f)](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  const std::size_t plane = g.shape().plane();
                  for (int n = 0; n < g.n(); ++n)
                    for (int c = 0; c < g.c(); ++c) {
                      const T* src = g.plane(n, c);
                      T* dst = gi[0]->plane(n, c);
                      for (std::size_t i = 0; i < plane; ++i) dst[i] += f[c] * src[i];
                    }
                });
}

template <typename T>
Var Tape<T>::sum(Var a) {
  double total = 0;
  for (T v : value(a).data()) total += v;
  return record(BasicTensor<T>(1, 1, 1, 1, static_cast<T>(total)), {a},
                [](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                  for (T& v : gi[0]->data()) v += g[0];
                });
}

template <typename T>
Var Tape<T>::mean(Var a) {
  return scale(sum(a), T(1) / static_cast<T>(value(a).size()));
}

template <typename T>
Var ParameterBinding<T>::operator()(const BasicTensor<T>& param) const {
  auto it = index_.find(&param);
  if (it == index_.end()) throw InvalidArgument("parameter binding: tensor was not bound");
  return it->second;
}

template class ParameterBinding<float>;
template class ParameterBinding<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace styleforge
