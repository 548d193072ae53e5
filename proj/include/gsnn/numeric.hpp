#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsnn/error.hpp"

namespace gsnn {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

/// Row-major dense matrix of doubles. Vectors are stored as n x 1.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 identity(std::size_t n);
  static Tensor2 column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  void fill(double v);
  bool same_shape(const Tensor2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

std::string shape_string(std::size_t rows, std::size_t cols);

// Throws NumericError naming `stage` if any entry is NaN or infinite.
void check_finite(std::span<const double> values, std::string_view stage);

// y += W x
void matvec_acc(const Tensor2& w, std::span<const double> x, std::span<double> y);
// y += W^T x
void matTvec_acc(const Tensor2& w, std::span<const double> x, std::span<double> y);
// G += dy x^T
void outer_acc(Tensor2& g, std::span<const double> dy, std::span<const double> x);

Vec concat(std::span<const double> a, std::span<const double> b);

// ---- layers -------------------------------------------------------------

Vec linear_forward(std::span<const double> x, const Tensor2& w, std::span<const double> b);

struct LinearGrads {
  Vec dx;
  Tensor2 dw;
  Vec db;
};
LinearGrads linear_backward(std::span<const double> x, const Tensor2& w, std::span<const double> dy);

double sigmoid(double x) noexcept;
Vec sigmoid(std::span<const double> x);
// Takes the forward output y, not the input.
Vec sigmoid_backward(std::span<const double> y, std::span<const double> dy);

Vec tanh(std::span<const double> x);
Vec tanh_backward(std::span<const double> y, std::span<const double> dy);

/// Weights of one gated update (update gate z, reset gate r, candidate).
struct GruWeights {
  const Tensor2& wz;
  const Tensor2& uz;
  const Tensor2& wr;
  const Tensor2& ur;
  const Tensor2& w;
  const Tensor2& u;
};

struct GruGradRefs {
  Tensor2& wz;
  Tensor2& uz;
  Tensor2& wr;
  Tensor2& ur;
  Tensor2& w;
  Tensor2& u;
};

/// Intermediates of one gated update, one row per call.
struct GruCache {
  Vec z;
  Vec r;
  Vec candidate;
};

// z = s(Wz a + Uz h), r = s(Wr a + Ur h), c = tanh(W a + U (r*h)), h' = (1-z)*h + z*c
// Writes h' to h_next; fills cache when given.
void gru_gate_step(std::span<const double> h_prev, std::span<const double> a, const GruWeights& p,
                   std::span<double> h_next, GruCache* cache = nullptr);
Vec gru_gate_step(std::span<const double> h_prev, std::span<const double> a, const GruWeights& p);

// Accumulates into dh_prev, da and the six weight gradients.
void gru_gate_backward(std::span<const double> h_prev, std::span<const double> a, const GruCache& cache,
                       std::span<const double> dh_next, const GruWeights& p, GruGradRefs grads,
                       std::span<double> dh_prev, std::span<double> da);

// ---- losses -------------------------------------------------------------

inline constexpr double kBceClamp = 1e-7;

double bce_loss(std::span<const double> p, std::span<const double> t);
Vec bce_backward(std::span<const double> p, std::span<const double> t);

double mse_loss(std::span<const double> p, std::span<const double> t);
Vec mse_backward(std::span<const double> p, std::span<const double> t);

// ---- dropout ------------------------------------------------------------

enum class Mode { train, eval };

struct DropoutResult {
  Vec y;
  Vec mask;  // 0 or 1/(1-rate) per entry
};

// Inverted dropout: survivors are scaled at train time so eval mode is identity.
DropoutResult dropout_forward(std::span<const double> x, double rate, Mode mode, Rng& rng);
Vec dropout_backward(std::span<const double> mask, std::span<const double> dy);

// ---- randomness ---------------------------------------------------------

/// Seed for a named sub-stream ("init", "dropout", "data", ...) of a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);
Rng make_rng(std::uint64_t root, std::string_view stream, std::uint64_t index = 0);

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
void init_uniform_fan_in(Tensor2& t, std::size_t fan_in, Rng& rng);

/// Shortest text that reads back to exactly v.
std::string format_double(double v);

}  // namespace gsnn
