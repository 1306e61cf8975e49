#include "styleforge/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <numbers>

#include "bytes.hpp"
#include "styleforge/error.hpp"
#include "styleforge/io.hpp"

namespace styleforge {

FlowField::FlowField(int height, int width, float u, float v) : height_(height), width_(width) {
  if (height < 1 || width < 1) throw InvalidArgument("flow field extents must be >= 1");
  uv_.resize(2 * static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < uv_.size(); i += 2) {
    uv_[i] = u;
    uv_[i + 1] = v;
  }
}

bool FlowField::is_sane() const noexcept {
  for (std::size_t i = 0; i < uv_.size(); i += 2) {
    if (!std::isfinite(uv_[i]) || !std::isfinite(uv_[i + 1])) return false;
    if (std::abs(uv_[i]) >= width_ || std::abs(uv_[i + 1]) >= height_) return false;
  }
  return true;
}

OcclusionMask::OcclusionMask(int height, int width, bool traceable)
    : height_(height), width_(width) {
  if (height < 1 || width < 1) throw InvalidArgument("mask extents must be >= 1");
  values_.assign(static_cast<std::size_t>(height) * width, traceable ? 1 : 0);
}

std::size_t OcclusionMask::traceable_count() const noexcept {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), std::uint8_t{1}));
}

template <typename T>
BasicTensor<T> OcclusionMask::as_tensor() const {
  BasicTensor<T> t(1, 1, height_, width_);
  for (std::size_t i = 0; i < values_.size(); ++i) t[i] = values_[i] ? T(1) : T(0);
  return t;
}

template BasicTensor<float> OcclusionMask::as_tensor<float>() const;
template BasicTensor<double> OcclusionMask::as_tensor<double>() const;

// ---------------------------------------------------------------------------
// Middlebury .flo

namespace {

constexpr float kFloTag = 202021.25f;

}  // namespace

FlowField read_flo(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes, "flo");
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PIEH", 4) != 0) {
    throw ParseError(ParseErrc::bad_magic, "flo: missing \"PIEH\" tag");
  }
  (void)r.get<float>();
  const auto width = r.get<std::int32_t>();
  const auto height = r.get<std::int32_t>();
  if (width < 1 || height < 1 || width > 99999 || height > 99999) {
    throw ParseError(ParseErrc::bad_dimensions, "flo: illegal extent " + std::to_string(width) +
                                                    "x" + std::to_string(height));
  }
  FlowField flow(height, width);
  r.get_array(flow.interleaved());
  if (r.remaining() != 0) {
    throw ParseError(ParseErrc::trailing_data,
                     "flo: " + std::to_string(r.remaining()) + " bytes past the payload");
  }
  return flow;
}

std::vector<std::byte> write_flo(const FlowField& flow) {
  detail::ByteWriter w;
  w.put<float>(kFloTag);
  w.put<std::int32_t>(flow.width());
  w.put<std::int32_t>(flow.height());
  w.put_array(flow.interleaved());
  return std::move(w.bytes());
}

FlowField read_flo_file(const std::filesystem::path& path) {
  const auto bytes = read_bytes(path);
  try {
    return read_flo(bytes);
  } catch (const ParseError& e) {
    throw ParseError(e.code(), path.string() + ": " + e.what());
  }
}

void write_flo_file(const std::filesystem::path& path, const FlowField& flow) {
  write_bytes(path, write_flo(flow));
}

OcclusionMask read_mask_pgm(std::span<const std::byte> bytes) {
  const GrayImage g = read_pgm(bytes);
  OcclusionMask m(g.height, g.width);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      m.set(y, x, g.pixels[static_cast<std::size_t>(y) * g.width + x] >= 128);
  return m;
}

std::vector<std::byte> write_mask_pgm(const OcclusionMask& mask) {
  GrayImage g;
  g.height = mask.height();
  g.width = mask.width();
  g.pixels.resize(static_cast<std::size_t>(g.height) * g.width);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x)
      g.pixels[static_cast<std::size_t>(y) * g.width + x] = mask.traceable(y, x) ? 255 : 0;
  return write_pgm(g);
}

// ---------------------------------------------------------------------------
// Warping

namespace {

template <typename T>
struct BilinearTap {
  int x0, x1, y0, y1;
  T fx, fy;
};

template <typename T>
BilinearTap<T> bilinear_tap(double sx, double sy, int width, int height) {
  sx = std::clamp(sx, 0.0, static_cast<double>(width - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(height - 1));
  BilinearTap<T> t;
  t.x0 = static_cast<int>(std::floor(sx));
  t.y0 = static_cast<int>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, width - 1);
  t.y1 = std::min(t.y0 + 1, height - 1);
  t.fx = static_cast<T>(sx - t.x0);
  t.fy = static_cast<T>(sy - t.y0);
  return t;
}

void check_flow_extent(const Shape& s, const FlowField& flow, const char* op) {
  if (s.h != flow.height() || s.w != flow.width()) {
    throw InvalidArgument(std::string(op) + ": tensor " + s.str() + " does not match flow " +
                          std::to_string(flow.height()) + "x" + std::to_string(flow.width()));
  }
}

}  // namespace

template <typename T>
BasicTensor<T> warp(const BasicTensor<T>& x, const FlowField& flow) {
  check_flow_extent(x.shape(), flow, "warp");
  BasicTensor<T> out(x.shape());
  const int h = x.h();
  const int w = x.w();
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const auto t = bilinear_tap<T>(xx + static_cast<double>(flow.u(y, xx)),
                                     y + static_cast<double>(flow.v(y, xx)), w, h);
      for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
          const T* src = x.plane(n, c);
          const T a = src[static_cast<std::size_t>(t.y0) * w + t.x0];
          const T b = src[static_cast<std::size_t>(t.y0) * w + t.x1];
          const T cc = src[static_cast<std::size_t>(t.y1) * w + t.x0];
          const T d = src[static_cast<std::size_t>(t.y1) * w + t.x1];
          const T top = a + t.fx * (b - a);
          const T bottom = cc + t.fx * (d - cc);
          out.at(n, c, y, xx) = top + t.fy * (bottom - top);
        }
      }
    }
  }
  return out;
}

template <typename T>
void warp_backward(const FlowField& flow, const BasicTensor<T>& grad_out, BasicTensor<T>& grad_x) {
  check_flow_extent(grad_out.shape(), flow, "warp_backward");
  const int h = grad_out.h();
  const int w = grad_out.w();
  for (int y = 0; y < h; ++y) {
    for (int xx = 0; xx < w; ++xx) {
      const auto t = bilinear_tap<T>(xx + static_cast<double>(flow.u(y, xx)),
                                     y + static_cast<double>(flow.v(y, xx)), w, h);
      const T w00 = (T(1) - t.fx) * (T(1) - t.fy);
      const T w01 = t.fx * (T(1) - t.fy);
      const T w10 = (T(1) - t.fx) * t.fy;
      const T w11 = t.fx * t.fy;
      for (int n = 0; n < grad_out.n(); ++n) {
        for (int c = 0; c < grad_out.c(); ++c) {
          const T g = grad_out.at(n, c, y, xx);
          T* dst = grad_x.plane(n, c);
          dst[static_cast<std::size_t>(t.y0) * w + t.x0] += w00 * g;
          dst[static_cast<std::size_t>(t.y0) * w + t.x1] += w01 * g;
          dst[static_cast<std::size_t>(t.y1) * w + t.x0] += w10 * g;
          dst[static_cast<std::size_t>(t.y1) * w + t.x1] += w11 * g;
        }
      }
    }
  }
}

template <typename T>
Var warp(Tape<T>& tape, Var x, const FlowField& flow) {
  auto field = std::make_shared<FlowField>(flow);
  return tape.record(warp(tape.value(x), *field), {x},
                     [field](const BasicTensor<T>& g, std::span<BasicTensor<T>* const> gi) {
                       warp_backward(*field, g, *gi[0]);
                     });
}

template BasicTensor<float> warp(const BasicTensor<float>&, const FlowField&);
template BasicTensor<double> warp(const BasicTensor<double>&, const FlowField&);
template void warp_backward(const FlowField&, const BasicTensor<float>&, BasicTensor<float>&);
template void warp_backward(const FlowField&, const BasicTensor<double>&, BasicTensor<double>&);
template Var warp(Tape<float>&, Var, const FlowField&);
template Var warp(Tape<double>&, Var, const FlowField&);

// ---------------------------------------------------------------------------
// Occlusion and downsampling

OcclusionMask occlusion_mask(const FlowField& a, const FlowField& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InvalidArgument("occlusion_mask: flow extents differ");
  }
  const int h = a.height();
  const int w = a.width();
  OcclusionMask mask(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double au = a.u(y, x);
      const double av = a.v(y, x);
      const double qx = x + au;
      const double qy = y + av;
      if (qx < 0.0 || qy < 0.0 || qx > w - 1 || qy > h - 1) {
        mask.set(y, x, false);
        continue;
      }
      const auto t = bilinear_tap<double>(qx, qy, w, h);
      auto sample = [&](auto component) {
        const double p00 = component(t.y0, t.x0);
        const double p01 = component(t.y0, t.x1);
        const double p10 = component(t.y1, t.x0);
        const double p11 = component(t.y1, t.x1);
        const double top = p00 + t.fx * (p01 - p00);
        const double bottom = p10 + t.fx * (p11 - p10);
        return top + t.fy * (bottom - top);
      };
      const double bu = sample([&](int yy, int xx) { return b.u(yy, xx); });
      const double bv = sample([&](int yy, int xx) { return b.v(yy, xx); });
      const double su = au + bu;
      const double sv = av + bv;
      const double lhs = su * su + sv * sv;
      const double rhs = 0.01 * (au * au + av * av + bu * bu + bv * bv) + 0.5;
      mask.set(y, x, lhs <= rhs);
    }
  }
  return mask;
}

FlowField downsample_flow(const FlowField& flow, int factor) {
  if (factor < 1 || flow.height() % factor != 0 || flow.width() % factor != 0) {
    throw InvalidArgument("downsample_flow: extents must be divisible by " +
                          std::to_string(factor));
  }
  FlowField out(flow.height() / factor, flow.width() / factor);
  const double norm = 1.0 / (static_cast<double>(factor) * factor * factor);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      double su = 0.0;
      double sv = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          su += flow.u(y * factor + dy, x * factor + dx);
          sv += flow.v(y * factor + dy, x * factor + dx);
        }
      out.set(y, x, static_cast<float>(su * norm), static_cast<float>(sv * norm));
    }
  }
  return out;
}

OcclusionMask downsample_mask(const OcclusionMask& mask, int factor) {
  if (factor < 1 || mask.height() % factor != 0 || mask.width() % factor != 0) {
    throw InvalidArgument("downsample_mask: extents must be divisible by " +
                          std::to_string(factor));
  }
  OcclusionMask out(mask.height() / factor, mask.width() / factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      bool all = true;
      for (int dy = 0; dy < factor && all; ++dy)
        for (int dx = 0; dx < factor && all; ++dx)
          all = mask.traceable(y * factor + dy, x * factor + dx);
      out.set(y, x, all);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic sequence

namespace {

// Sum of random plane waves per channel, values in [0.05, 0.95].
class SmoothTexture {
 public:
  SmoothTexture(SplitMix64& rng, double period) {
    for (auto& channel : waves_) {
      for (Wave& w : channel) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double cycles = rng.uniform(1.0, 4.0);
        w.kx = std::cos(angle) * cycles * 2.0 * std::numbers::pi / period;
        w.ky = std::sin(angle) * cycles * 2.0 * std::numbers::pi / period;
        w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        w.amplitude = rng.uniform(0.05, 0.1125);
      }
    }
  }

  float operator()(int channel, double x, double y) const {
    double v = 0.5;
    for (const Wave& w : waves_[static_cast<std::size_t>(channel)]) {
      v += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
    }
    return static_cast<float>(v);
  }

 private:
  struct Wave {
    double kx, ky, phase, amplitude;
  };
  std::array<std::array<Wave, 4>, 3> waves_{};
};

}  // namespace

SyntheticSequence synth_sequence(std::uint64_t seed, int length, int height, int width,
                                 int velocity_u, int velocity_v) {
  if (length < 1 || height < 1 || width < 1) {
    throw InvalidArgument("synth_sequence: length and extents must be >= 1");
  }
  const int au = std::abs(velocity_u);
  const int av = std::abs(velocity_v);
  if (static_cast<long long>(au) * length >= width || static_cast<long long>(av) * length >= height) {
    throw InvalidArgument("synth_sequence: velocity too large for the frame over " +
                          std::to_string(length) + " frames");
  }
  SplitMix64 rng(seed);
  const SmoothTexture background(rng, std::max(height, width));
  const SmoothTexture foreground(rng, std::max(height, width) / 2.0);

  // The patch stays fully inside the frame for the whole clip.
  const int avail_w = width - au * (length - 1);
  const int avail_h = height - av * (length - 1);
  const int patch_w = std::max(1, avail_w / 2);
  const int patch_h = std::max(1, avail_h / 2);
  const int x0 = (velocity_u >= 0 ? 0 : au * (length - 1)) + (avail_w - patch_w) / 2;
  const int y0 = (velocity_v >= 0 ? 0 : av * (length - 1)) + (avail_h - patch_h) / 2;

  auto inside = [&](int t, int y, int x) {
    const int px = x0 + velocity_u * t;
    const int py = y0 + velocity_v * t;
    return x >= px && x < px + patch_w && y >= py && y < py + patch_h;
  };

  SyntheticSequence seq;
  for (int t = 0; t < length; ++t) {
    Tensor frame(1, 3, height, width);
    const int px = x0 + velocity_u * t;
    const int py = y0 + velocity_v * t;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const bool fg = inside(t, y, x);
        for (int c = 0; c < 3; ++c) {
          frame.at(0, c, y, x) = fg ? foreground(c, x - px, y - py) : background(c, x, y);
        }
      }
    seq.frames.push_back(std::move(frame));
  }
  for (int t = 0; t + 1 < length; ++t) {
    FlowField fwd(height, width);
    FlowField bwd(height, width);
    OcclusionMask mask(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        if (inside(t, y, x)) fwd.set(y, x, float(velocity_u), float(velocity_v));
        if (inside(t + 1, y, x)) {
          bwd.set(y, x, float(-velocity_u), float(-velocity_v));
        } else if (inside(t, y, x)) {
          mask.set(y, x, false);  // background uncovered by the patch
        }
      }
    seq.forward_flows.push_back(std::move(fwd));
    seq.backward_flows.push_back(std::move(bwd));
    seq.masks.push_back(std::move(mask));
  }
  return seq;
}

}  // namespace styleforge
