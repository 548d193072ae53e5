#pragma once

// Message-passing kernels. Each kernel has a plain serial reference and an
// OpenMP version; tests hold the two to agreement and the bench compares them.

#include <cstdint>
#include <exception>
#include <span>
#include <vector>

#include "gsnn/kgraph.hpp"
#include "gsnn/numeric.hpp"

namespace gsnn {

enum class Exec { serial, parallel };

// Channel of a message into node v: incoming u->v of type e is 2e, outgoing
// v->u of type e is 2e+1.
inline std::uint32_t in_channel(EdgeTypeId t) { return 2 * t; }
inline std::uint32_t out_channel(EdgeTypeId t) { return 2 * t + 1; }

/// Edges among the rows of a local state matrix, grouped by destination row
/// (CSR) with a transposed copy grouped by source row.
struct LocalTopology {
  std::size_t rows = 0;
  std::vector<std::uint32_t> dst_offsets;  // rows + 1
  std::vector<std::uint32_t> dst_src;      // source row per entry
  std::vector<std::uint32_t> dst_channel;
  std::vector<std::uint32_t> src_offsets;  // rows + 1
  std::vector<std::uint32_t> src_dst;
  std::vector<std::uint32_t> src_channel;

  std::size_t edge_count() const noexcept { return dst_src.size(); }
};

struct LocalEdge {
  std::uint32_t dst;
  std::uint32_t src;
  std::uint32_t channel;
};

LocalTopology make_topology(std::size_t rows, std::vector<LocalEdge> edges);

/// Per-channel message matrices plus the shared bias of the aggregation.
struct MessageWeights {
  std::vector<const Tensor2*> channel;
  std::span<const double> bias;
};

struct MessageGrads {
  std::vector<Tensor2*> channel;
  std::span<double> bias;
};

// a[v] = bias + sum over entries (u, c) of v: W_c h[u]
void aggregate_serial(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a);
void aggregate_omp(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a);
void aggregate(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a, Exec exec);

// Given da, accumulates dh (+= W_c^T da[v] into row u), dW_c and dbias.
void aggregate_backward_serial(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                               Tensor2& dh, MessageGrads& g);
void aggregate_backward_omp(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                            Tensor2& dh, MessageGrads& g);
void aggregate_backward(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                        Tensor2& dh, MessageGrads& g, Exec exec);

/// Dense 0/1 adjacency, one N x N plane per channel (plane c, row v, column u).
class DenseAdjacency {
 public:
  DenseAdjacency() = default;
  DenseAdjacency(std::size_t nodes, std::size_t channels);
  static DenseAdjacency from_graph(const KnowledgeGraph& graph);

  std::size_t nodes() const noexcept { return n_; }
  std::size_t channels() const noexcept { return channels_; }
  std::uint8_t& at(std::size_t c, std::size_t v, std::size_t u) { return planes_[(c * n_ + v) * n_ + u]; }
  std::uint8_t at(std::size_t c, std::size_t v, std::size_t u) const { return planes_[(c * n_ + v) * n_ + u]; }
  const std::uint8_t* row(std::size_t c, std::size_t v) const { return planes_.data() + (c * n_ + v) * n_; }

 private:
  std::size_t n_ = 0;
  std::size_t channels_ = 0;
  std::vector<std::uint8_t> planes_;
};

// Same contract as aggregate(), computed as a dense product over all N^2 pairs.
void dense_aggregate_serial(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a);
void dense_aggregate_omp(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a);
void dense_aggregate(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a, Exec exec);

void dense_aggregate_backward_serial(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da,
                                     const MessageWeights& w, Tensor2& dh, MessageGrads& g);
void dense_aggregate_backward_omp(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da,
                                  const MessageWeights& w, Tensor2& dh, MessageGrads& g);
void dense_aggregate_backward(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                              Tensor2& dh, MessageGrads& g, Exec exec);

// Row-wise gated update h_out[i] = gru(h_in[i], a[i]); caches one entry per row.
void gru_rows_serial(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out,
                     std::vector<GruCache>& caches);
void gru_rows_omp(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out,
                  std::vector<GruCache>& caches);
void gru_rows(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out, std::vector<GruCache>& caches,
              Exec exec);

// Caps OpenMP threads; 1 gives the deterministic reference schedule.
void set_thread_count(int threads);
int thread_count();

/// Runs fn(i) for i in [0, n); with Exec::parallel the indices are spread over
/// OpenMP threads and the first exception is rethrown after the loop.
template <typename Fn>
void parallel_for(std::size_t n, Exec exec, Fn&& fn) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(gsnn_parallel_for_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace gsnn
