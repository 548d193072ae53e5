#include "gsnn/kernels.hpp"

#include <algorithm>
#include <exception>

#include <omp.h>

namespace gsnn {

LocalTopology make_topology(std::size_t rows, std::vector<LocalEdge> edges) {
  LocalTopology t;
  t.rows = rows;
  std::sort(edges.begin(), edges.end(), [](const LocalEdge& a, const LocalEdge& b) {
    if (a.dst != b.dst) return a.dst < b.dst;
    if (a.src != b.src) return a.src < b.src;
    return a.channel < b.channel;
  });
  t.dst_offsets.assign(rows + 1, 0);
  t.src_offsets.assign(rows + 1, 0);
  for (const auto& e : edges) {
    if (e.dst >= rows || e.src >= rows) throw RangeError("local edge outside the state matrix");
    ++t.dst_offsets[e.dst + 1];
    ++t.src_offsets[e.src + 1];
  }
  for (std::size_t i = 0; i < rows; ++i) {
    t.dst_offsets[i + 1] += t.dst_offsets[i];
    t.src_offsets[i + 1] += t.src_offsets[i];
  }
  t.dst_src.resize(edges.size());
  t.dst_channel.resize(edges.size());
  t.src_dst.resize(edges.size());
  t.src_channel.resize(edges.size());
  std::vector<std::uint32_t> cursor(t.src_offsets.begin(), t.src_offsets.end() - 1);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    t.dst_src[i] = edges[i].src;
    t.dst_channel[i] = edges[i].channel;
    const auto slot = cursor[edges[i].src]++;
    t.src_dst[slot] = edges[i].dst;
    t.src_channel[slot] = edges[i].channel;
  }
  return t;
}

namespace {

void check_shapes(const Tensor2& h, const Tensor2& a, const MessageWeights& w) {
  if (!h.same_shape(a)) throw DimensionError("aggregate: h " + h.shape_string() + " vs a " + a.shape_string());
  if (w.bias.size() != h.cols()) throw DimensionError("aggregate: bias length does not match hidden size");
  for (const auto* m : w.channel) {
    if (m->rows() != h.cols() || m->cols() != h.cols()) {
      throw DimensionError("aggregate: message matrix " + m->shape_string() + " vs hidden " +
                           std::to_string(h.cols()));
    }
  }
}

// out += W x, with sizes already checked.
inline void gemv_add(const Tensor2& w, const double* x, double* out) {
  const std::size_t n = w.cols();
  const double* row = w.data();
  for (std::size_t i = 0; i < w.rows(); ++i, row += n) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
    out[i] += s;
  }
}

// out += W^T x
inline void gemvT_add(const Tensor2& w, const double* x, double* out) {
  const std::size_t n = w.cols();
  const double* row = w.data();
  for (std::size_t i = 0; i < w.rows(); ++i, row += n) {
    const double xi = x[i];
    for (std::size_t j = 0; j < n; ++j) out[j] += row[j] * xi;
  }
}

void aggregate_row(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a, std::size_t v) {
  auto out = a.row(v);
  std::copy(w.bias.begin(), w.bias.end(), out.begin());
  for (auto k = topo.dst_offsets[v]; k < topo.dst_offsets[v + 1]; ++k) {
    gemv_add(*w.channel[topo.dst_channel[k]], h.row(topo.dst_src[k]).data(), out.data());
  }
}

void message_weight_grads(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, MessageGrads& g) {
  for (std::size_t v = 0; v < topo.rows; ++v) {
    auto dav = da.row(v);
    for (std::size_t k = 0; k < dav.size(); ++k) g.bias[k] += dav[k];
    for (auto e = topo.dst_offsets[v]; e < topo.dst_offsets[v + 1]; ++e) {
      outer_acc(*g.channel[topo.dst_channel[e]], dav, h.row(topo.dst_src[e]));
    }
  }
}

template <typename Fn>
void parallel_rows(std::size_t rows, Fn&& fn) {
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(rows); ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(gsnn_kernel_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void aggregate_serial(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a) {
  check_shapes(h, a, w);
  for (std::size_t v = 0; v < topo.rows; ++v) aggregate_row(topo, h, w, a, v);
}

void aggregate_omp(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a) {
  check_shapes(h, a, w);
  parallel_rows(topo.rows, [&](std::size_t v) { aggregate_row(topo, h, w, a, v); });
}

void aggregate(const LocalTopology& topo, const Tensor2& h, const MessageWeights& w, Tensor2& a, Exec exec) {
  exec == Exec::serial ? aggregate_serial(topo, h, w, a) : aggregate_omp(topo, h, w, a);
}

void aggregate_backward_serial(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                               Tensor2& dh, MessageGrads& g) {
  check_shapes(h, da, w);
  for (std::size_t v = 0; v < topo.rows; ++v) {
    for (auto e = topo.dst_offsets[v]; e < topo.dst_offsets[v + 1]; ++e) {
      gemvT_add(*w.channel[topo.dst_channel[e]], da.row(v).data(), dh.row(topo.dst_src[e]).data());
    }
  }
  message_weight_grads(topo, h, da, g);
}

void aggregate_backward_omp(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                            Tensor2& dh, MessageGrads& g) {
  check_shapes(h, da, w);
  // Gather by source row so each thread owns the rows of dh it writes.
  parallel_rows(topo.rows, [&](std::size_t u) {
    for (auto e = topo.src_offsets[u]; e < topo.src_offsets[u + 1]; ++e) {
      gemvT_add(*w.channel[topo.src_channel[e]], da.row(topo.src_dst[e]).data(), dh.row(u).data());
    }
  });
  message_weight_grads(topo, h, da, g);
}

void aggregate_backward(const LocalTopology& topo, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                        Tensor2& dh, MessageGrads& g, Exec exec) {
  exec == Exec::serial ? aggregate_backward_serial(topo, h, da, w, dh, g)
                       : aggregate_backward_omp(topo, h, da, w, dh, g);
}

// ---- dense --------------------------------------------------------------

DenseAdjacency::DenseAdjacency(std::size_t nodes, std::size_t channels)
    : n_(nodes), channels_(channels), planes_(channels * nodes * nodes, 0) {}

DenseAdjacency DenseAdjacency::from_graph(const KnowledgeGraph& graph) {
  DenseAdjacency adj(graph.node_count(), 2 * graph.edge_type_count());
  for (const auto& e : graph.edges()) {
    adj.at(in_channel(e.type), e.dst, e.src) = 1;
    adj.at(out_channel(e.type), e.src, e.dst) = 1;
  }
  return adj;
}

namespace {

// M_c = h W_c^T for every channel: row u of M_c is the message u would send on c.
std::vector<Tensor2> channel_messages(const Tensor2& h, const MessageWeights& w) {
  std::vector<Tensor2> m(w.channel.size(), Tensor2(h.rows(), h.cols()));
  for (std::size_t c = 0; c < w.channel.size(); ++c) {
    for (std::size_t u = 0; u < h.rows(); ++u) gemv_add(*w.channel[c], h.row(u).data(), m[c].row(u).data());
  }
  return m;
}

void dense_row(const DenseAdjacency& adj, const std::vector<Tensor2>& m, const MessageWeights& w, Tensor2& a,
               std::size_t v) {
  const std::size_t n = adj.nodes();
  const std::size_t hd = a.cols();
  double* out = a.row(v).data();
  std::copy(w.bias.begin(), w.bias.end(), out);
  for (std::size_t c = 0; c < adj.channels(); ++c) {
    const std::uint8_t* coef = adj.row(c, v);
    const double* mc = m[c].data();
    for (std::size_t u = 0; u < n; ++u) {
      const double k = coef[u];
      const double* mu = mc + u * hd;
      for (std::size_t j = 0; j < hd; ++j) out[j] += k * mu[j];
    }
  }
}

void check_dense(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w) {
  if (adj.nodes() != h.rows()) throw DimensionError("dense aggregate: adjacency has " + std::to_string(adj.nodes()) +
                                                    " nodes, state has " + std::to_string(h.rows()) + " rows");
  if (adj.channels() != w.channel.size()) throw DimensionError("dense aggregate: channel count mismatch");
}

// dM_c[u] = sum_v A_c[v,u] da[v] over the column block [u0, u1).
void dense_column_block(const DenseAdjacency& adj, const Tensor2& da, std::vector<Tensor2>& dm, std::size_t u0,
                        std::size_t u1) {
  const std::size_t n = adj.nodes();
  const std::size_t hd = da.cols();
  for (std::size_t c = 0; c < adj.channels(); ++c) {
    double* out = dm[c].data();
    for (std::size_t v = 0; v < n; ++v) {
      const std::uint8_t* coef = adj.row(c, v);
      const double* dav = da.row(v).data();
      for (std::size_t u = u0; u < u1; ++u) {
        const double k = coef[u];
        double* o = out + u * hd;
        for (std::size_t j = 0; j < hd; ++j) o[j] += k * dav[j];
      }
    }
  }
}

void dense_finish_backward(const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                           const std::vector<Tensor2>& dm, Tensor2& dh, MessageGrads& g) {
  for (std::size_t v = 0; v < da.rows(); ++v) {
    auto dav = da.row(v);
    for (std::size_t k = 0; k < dav.size(); ++k) g.bias[k] += dav[k];
  }
  for (std::size_t c = 0; c < dm.size(); ++c) {
    for (std::size_t u = 0; u < h.rows(); ++u) {
      outer_acc(*g.channel[c], dm[c].row(u), h.row(u));
      gemvT_add(*w.channel[c], dm[c].row(u).data(), dh.row(u).data());
    }
  }
}

}  // namespace

void dense_aggregate_serial(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a) {
  check_shapes(h, a, w);
  check_dense(adj, h, w);
  const auto m = channel_messages(h, w);
  for (std::size_t v = 0; v < adj.nodes(); ++v) dense_row(adj, m, w, a, v);
}

void dense_aggregate_omp(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a) {
  check_shapes(h, a, w);
  check_dense(adj, h, w);
  const auto m = channel_messages(h, w);
  parallel_rows(adj.nodes(), [&](std::size_t v) { dense_row(adj, m, w, a, v); });
}

void dense_aggregate(const DenseAdjacency& adj, const Tensor2& h, const MessageWeights& w, Tensor2& a, Exec exec) {
  exec == Exec::serial ? dense_aggregate_serial(adj, h, w, a) : dense_aggregate_omp(adj, h, w, a);
}

void dense_aggregate_backward_serial(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da,
                                     const MessageWeights& w, Tensor2& dh, MessageGrads& g) {
  check_shapes(h, da, w);
  check_dense(adj, h, w);
  std::vector<Tensor2> dm(adj.channels(), Tensor2(h.rows(), h.cols()));
  dense_column_block(adj, da, dm, 0, adj.nodes());
  dense_finish_backward(h, da, w, dm, dh, g);
}

void dense_aggregate_backward_omp(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da,
                                  const MessageWeights& w, Tensor2& dh, MessageGrads& g) {
  check_shapes(h, da, w);
  check_dense(adj, h, w);
  std::vector<Tensor2> dm(adj.channels(), Tensor2(h.rows(), h.cols()));
  const std::size_t n = adj.nodes();
  constexpr std::size_t kBlock = 256;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;
  // Each block owns a disjoint column range, so sums stay in row order.
  parallel_rows(blocks, [&](std::size_t b) {
    dense_column_block(adj, da, dm, b * kBlock, std::min(n, (b + 1) * kBlock));
  });
  dense_finish_backward(h, da, w, dm, dh, g);
}

void dense_aggregate_backward(const DenseAdjacency& adj, const Tensor2& h, const Tensor2& da, const MessageWeights& w,
                              Tensor2& dh, MessageGrads& g, Exec exec) {
  exec == Exec::serial ? dense_aggregate_backward_serial(adj, h, da, w, dh, g)
                       : dense_aggregate_backward_omp(adj, h, da, w, dh, g);
}

// ---- gated update -------------------------------------------------------

void gru_rows_serial(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out,
                     std::vector<GruCache>& caches) {
  caches.resize(h_in.rows());
  for (std::size_t i = 0; i < h_in.rows(); ++i) gru_gate_step(h_in.row(i), a.row(i), p, h_out.row(i), &caches[i]);
}

void gru_rows_omp(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out,
                  std::vector<GruCache>& caches) {
  caches.resize(h_in.rows());
  parallel_rows(h_in.rows(), [&](std::size_t i) { gru_gate_step(h_in.row(i), a.row(i), p, h_out.row(i), &caches[i]); });
}

void gru_rows(const Tensor2& h_in, const Tensor2& a, const GruWeights& p, Tensor2& h_out, std::vector<GruCache>& caches,
              Exec exec) {
  exec == Exec::serial ? gru_rows_serial(h_in, a, p, h_out, caches) : gru_rows_omp(h_in, a, p, h_out, caches);
}

void set_thread_count(int threads) {
  if (threads >= 1) omp_set_num_threads(threads);
}

int thread_count() { return omp_get_max_threads(); }

}  // namespace gsnn
