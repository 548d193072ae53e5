#include "gsnn/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

namespace gsnn {

Tensor2::Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         gsnn::shape_string(rows_, cols_));
  }
}

Tensor2 Tensor2::identity(std::size_t n) {
  Tensor2 t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

Tensor2 Tensor2::column(std::span<const double> values) {
  return Tensor2(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Tensor2::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string Tensor2::shape_string() const { return gsnn::shape_string(rows_, cols_); }

std::string shape_string(std::size_t rows, std::size_t cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void check_finite(std::span<const double> values, std::string_view stage) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(stage), "non-finite value at index " + std::to_string(i));
    }
  }
}

namespace {

void require(bool ok, const std::string& what, const std::string& a, const std::string& b) {
  if (!ok) throw DimensionError(what + ": " + a + " vs " + b);
}

}  // namespace

void matvec_acc(const Tensor2& w, std::span<const double> x, std::span<double> y) {
  require(w.cols() == x.size() && w.rows() == y.size(), "matvec", w.shape_string(),
          "x[" + std::to_string(x.size()) + "] y[" + std::to_string(y.size()) + "]");
  const std::size_t n = w.cols();
  const double* row = w.data();
  for (std::size_t i = 0; i < w.rows(); ++i, row += n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

void matTvec_acc(const Tensor2& w, std::span<const double> x, std::span<double> y) {
  require(w.rows() == x.size() && w.cols() == y.size(), "matTvec", w.shape_string(),
          "x[" + std::to_string(x.size()) + "] y[" + std::to_string(y.size()) + "]");
  const std::size_t n = w.cols();
  const double* row = w.data();
  for (std::size_t i = 0; i < w.rows(); ++i, row += n) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
  }
}

void outer_acc(Tensor2& g, std::span<const double> dy, std::span<const double> x) {
  require(g.rows() == dy.size() && g.cols() == x.size(), "outer", g.shape_string(),
          "dy[" + std::to_string(dy.size()) + "] x[" + std::to_string(x.size()) + "]");
  const std::size_t n = g.cols();
  double* row = g.data();
  for (std::size_t i = 0; i < g.rows(); ++i, row += n) {
    const double d = dy[i];
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) row[j] += d * x[j];
  }
}

Vec concat(std::span<const double> a, std::span<const double> b) {
  Vec out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

Vec linear_forward(std::span<const double> x, const Tensor2& w, std::span<const double> b) {
  require(b.size() == w.rows(), "linear bias", w.shape_string(), "b[" + std::to_string(b.size()) + "]");
  Vec y(b.begin(), b.end());
  matvec_acc(w, x, y);
  return y;
}

LinearGrads linear_backward(std::span<const double> x, const Tensor2& w, std::span<const double> dy) {
  require(dy.size() == w.rows(), "linear backward", w.shape_string(), "dy[" + std::to_string(dy.size()) + "]");
  LinearGrads g{Vec(w.cols(), 0.0), Tensor2(w.rows(), w.cols()), Vec(dy.begin(), dy.end())};
  matTvec_acc(w, dy, g.dx);
  outer_acc(g.dw, dy, x);
  return g;
}

double sigmoid(double x) noexcept {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vec sigmoid(std::span<const double> x) {
  Vec y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return sigmoid(v); });
  return y;
}

Vec sigmoid_backward(std::span<const double> y, std::span<const double> dy) {
  Vec dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (1.0 - y[i]);
  return dx;
}

Vec tanh(std::span<const double> x) {
  Vec y(x.size());
  std::transform(x.begin(), x.end(), y.begin(), [](double v) { return std::tanh(v); });
  return y;
}

Vec tanh_backward(std::span<const double> y, std::span<const double> dy) {
  Vec dx(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
  return dx;
}

void gru_gate_step(std::span<const double> h_prev, std::span<const double> a, const GruWeights& p,
                   std::span<double> h_next, GruCache* cache) {
  const std::size_t n = h_prev.size();
  if (a.size() != p.wz.cols() || n != p.uz.cols() || h_next.size() != n) {
    throw DimensionError("gru: a[" + std::to_string(a.size()) + "] h[" + std::to_string(n) + "] vs Wz " +
                         p.wz.shape_string());
  }
  Vec z(n, 0.0), r(n, 0.0), c(n, 0.0), rh(n);
  matvec_acc(p.wz, a, z);
  matvec_acc(p.uz, h_prev, z);
  matvec_acc(p.wr, a, r);
  matvec_acc(p.ur, h_prev, r);
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = sigmoid(z[i]);
    r[i] = sigmoid(r[i]);
    rh[i] = r[i] * h_prev[i];
  }
  check_finite(z, "gru.update_gate");
  check_finite(r, "gru.reset_gate");
  matvec_acc(p.w, a, c);
  matvec_acc(p.u, rh, c);
  for (std::size_t i = 0; i < n; ++i) c[i] = std::tanh(c[i]);
  check_finite(c, "gru.candidate");
  for (std::size_t i = 0; i < n; ++i) h_next[i] = (1.0 - z[i]) * h_prev[i] + z[i] * c[i];
  check_finite(h_next, "gru.output");
  if (cache) {
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->candidate = std::move(c);
  }
}

Vec gru_gate_step(std::span<const double> h_prev, std::span<const double> a, const GruWeights& p) {
  Vec h(h_prev.size());
  gru_gate_step(h_prev, a, p, h, nullptr);
  return h;
}

void gru_gate_backward(std::span<const double> h_prev, std::span<const double> a, const GruCache& cache,
                       std::span<const double> dh_next, const GruWeights& p, GruGradRefs grads,
                       std::span<double> dh_prev, std::span<double> da) {
  const std::size_t n = h_prev.size();
  const Vec& z = cache.z;
  const Vec& r = cache.r;
  const Vec& c = cache.candidate;
  Vec dz_pre(n), dc_pre(n), rh(n);
  for (std::size_t i = 0; i < n; ++i) {
    dh_prev[i] += dh_next[i] * (1.0 - z[i]);
    dz_pre[i] = dh_next[i] * (c[i] - h_prev[i]) * z[i] * (1.0 - z[i]);
    dc_pre[i] = dh_next[i] * z[i] * (1.0 - c[i] * c[i]);
    rh[i] = r[i] * h_prev[i];
  }
  // candidate branch
  outer_acc(grads.w, dc_pre, a);
  outer_acc(grads.u, dc_pre, rh);
  matTvec_acc(p.w, dc_pre, da);
  Vec drh(n, 0.0);
  matTvec_acc(p.u, dc_pre, drh);
  Vec dr_pre(n);
  for (std::size_t i = 0; i < n; ++i) {
    dh_prev[i] += drh[i] * r[i];
    dr_pre[i] = drh[i] * h_prev[i] * r[i] * (1.0 - r[i]);
  }
  // gates
  outer_acc(grads.wz, dz_pre, a);
  outer_acc(grads.uz, dz_pre, h_prev);
  outer_acc(grads.wr, dr_pre, a);
  outer_acc(grads.ur, dr_pre, h_prev);
  matTvec_acc(p.wz, dz_pre, da);
  matTvec_acc(p.wr, dr_pre, da);
  matTvec_acc(p.uz, dz_pre, dh_prev);
  matTvec_acc(p.ur, dr_pre, dh_prev);
}

namespace {

void check_loss_shapes(std::span<const double> p, std::span<const double> t, const char* what) {
  if (p.size() != t.size() || p.empty()) {
    throw DimensionError(std::string(what) + ": predictions[" + std::to_string(p.size()) + "] vs targets[" +
                         std::to_string(t.size()) + "]");
  }
}

double clamp_prob(double p) { return std::clamp(p, kBceClamp, 1.0 - kBceClamp); }

}  // namespace

double bce_loss(std::span<const double> p, std::span<const double> t) {
  check_loss_shapes(p, t, "bce");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) throw DomainError("bce target must be 0 or 1, got " + std::to_string(t[i]));
    const double q = clamp_prob(p[i]);
    sum -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.size());
}

Vec bce_backward(std::span<const double> p, std::span<const double> t) {
  check_loss_shapes(p, t, "bce");
  Vec g(p.size());
  const double inv_n = 1.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) throw DomainError("bce target must be 0 or 1, got " + std::to_string(t[i]));
    const double q = clamp_prob(p[i]);
    // Derivative of the clamped expression; zero where the clamp is active.
    if (q != p[i]) {
      g[i] = 0.0;
      continue;
    }
    g[i] = inv_n * (-t[i] / q + (1.0 - t[i]) / (1.0 - q));
  }
  return g;
}

double mse_loss(std::span<const double> p, std::span<const double> t) {
  check_loss_shapes(p, t, "mse");
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) sum += (p[i] - t[i]) * (p[i] - t[i]);
  return sum / static_cast<double>(p.size());
}

Vec mse_backward(std::span<const double> p, std::span<const double> t) {
  check_loss_shapes(p, t, "mse");
  Vec g(p.size());
  const double scale = 2.0 / static_cast<double>(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = scale * (p[i] - t[i]);
  return g;
}

DropoutResult dropout_forward(std::span<const double> x, double rate, Mode mode, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  DropoutResult out{Vec(x.begin(), x.end()), Vec(x.size(), 1.0)};
  if (mode == Mode::eval || rate == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.mask[i] = u(rng) < rate ? 0.0 : keep_scale;
    out.y[i] = x[i] * out.mask[i];
  }
  return out;
}

Vec dropout_backward(std::span<const double> mask, std::span<const double> dy) {
  Vec dx(dy.size());
  for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
  return dx;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(root ^ h) + index);
}

Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index) {
  return Rng(derive_seed(root, stream, index));
}

void init_uniform_fan_in(Tensor2& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.flat()) v = u(rng);
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace gsnn
