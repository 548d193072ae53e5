#include "gsnn/params.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace gsnn {

ParamId ParameterSet::add(const std::string& name, Tensor2 value) {
  if (index_.contains(name)) throw StateError("duplicate parameter name '" + name + "'");
  const ParamId id = params_.size();
  Parameter p;
  p.name = name;
  p.value = std::move(value);
  params_.push_back(std::move(p));
  index_.emplace(name, id);
  return id;
}

std::optional<ParamId> ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

ParamId ParameterSet::id(const std::string& name) const {
  auto found = find(name);
  if (!found) throw StateError("unknown parameter '" + name + "'");
  return *found;
}

std::vector<ParamId> ParameterSet::ids() const {
  std::vector<ParamId> out(params_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::vector<ParamId> ParameterSet::ids_with_prefix(const std::string& prefix) const {
  std::vector<ParamId> out;
  for (const auto& [name, id] : index_) {
    if (name.starts_with(prefix)) out.push_back(id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<ParamId> ParameterSet::ids_by_name() const {
  std::vector<ParamId> out;
  out.reserve(index_.size());
  for (const auto& entry : index_) out.push_back(entry.second);
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (!p.grad.same_shape(p.value)) {
      p.grad = Tensor2(p.value.rows(), p.value.cols());
    } else {
      p.grad.fill(0.0);
    }
  }
}

GradientBuffer ParameterSet::make_gradient_buffer(const std::vector<ParamId>& subset) const {
  GradientBuffer buf(params_.size());
  if (subset.empty()) {
    for (std::size_t i = 0; i < params_.size(); ++i) buf[i] = Tensor2(params_[i].value.rows(), params_[i].value.cols());
  } else {
    for (ParamId id : subset) buf.at(id) = Tensor2(params_[id].value.rows(), params_[id].value.cols());
  }
  return buf;
}

void ParameterSet::accumulate(const GradientBuffer& buffer) {
  if (buffer.size() != params_.size()) throw StateError("gradient buffer does not match parameter set");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (buffer[i].empty()) continue;
    auto& p = params_[i];
    if (!p.grad.same_shape(p.value)) throw StateError("gradient of '" + p.name + "' not initialised");
    auto g = p.grad.flat();
    auto b = buffer[i].flat();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += b[k];
  }
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::assign_from(const ParameterSet& other, bool with_state) {
  for (auto& p : params_) {
    auto src = other.find(p.name);
    if (!src) throw StateError("checkpoint is missing parameter '" + p.name + "'");
    const Parameter& q = other.at(*src);
    if (!q.value.same_shape(p.value)) {
      throw DimensionError("parameter '" + p.name + "' has shape " + q.value.shape_string() + ", model expects " +
                           p.value.shape_string());
    }
    p.value = q.value;
    if (with_state) {
      p.m = q.m;
      p.v = q.v;
      p.steps = q.steps;
    }
  }
}

namespace {

constexpr const char* kCkptHeader = "GSNN-CKPT v1";

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in, const std::string& what) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw IoError("checkpoint truncated while reading " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_tensor_data(std::ostream& out, const Tensor2& t) {
  for (double d : t.flat()) put_u64(out, std::bit_cast<std::uint64_t>(d));
}

Tensor2 get_tensor_data(std::istream& in, std::size_t rows, std::size_t cols, const std::string& what) {
  Tensor2 t(rows, cols);
  for (double& d : t.flat()) d = std::bit_cast<double>(get_u64(in, what));
  return t;
}

std::string get_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("checkpoint truncated: expected " + what);
  return line;
}

}  // namespace

void save_checkpoint(const ParameterSet& params, std::ostream& out, bool with_state) {
  const auto order = params.ids_by_name();
  out << kCkptHeader << '\n' << "params " << order.size() << '\n';
  for (ParamId id : order) {
    const auto& p = params.at(id);
    out << p.name << '\n';
    put_u64(out, p.value.rows());
    put_u64(out, p.value.cols());
    put_tensor_data(out, p.value);
  }
  if (with_state) {
    out << "state\n";
    for (ParamId id : order) {
      const auto& p = params.at(id);
      put_u64(out, static_cast<std::uint64_t>(p.steps));
      const bool has_m = p.m.same_shape(p.value);
      const bool has_v = p.v.same_shape(p.value);
      out.put(has_m ? 1 : 0);
      if (has_m) put_tensor_data(out, p.m);
      out.put(has_v ? 1 : 0);
      if (has_v) put_tensor_data(out, p.v);
    }
  }
  out << "end\n";
  if (!out) throw IoError("failed writing checkpoint");
}

void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path, bool with_state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  save_checkpoint(params, out, with_state);
}

ParameterSet load_checkpoint(std::istream& in) {
  const std::string header = get_line(in, "header");
  if (header != kCkptHeader) throw IoError("not a v1 checkpoint (header '" + header + "')");
  const std::string count_line = get_line(in, "parameter count");
  if (!count_line.starts_with("params ")) throw IoError("malformed checkpoint count line '" + count_line + "'");
  const std::size_t count = std::stoul(count_line.substr(7));
  ParameterSet params;
  std::vector<ParamId> order;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = get_line(in, "parameter name");
    const auto rows = get_u64(in, name + " rows");
    const auto cols = get_u64(in, name + " cols");
    if (rows * cols > (std::uint64_t{1} << 32)) throw IoError("implausible shape for '" + name + "'");
    order.push_back(params.add(name, get_tensor_data(in, rows, cols, name)));
  }
  std::string tail = get_line(in, "end marker");
  if (tail == "state") {
    for (ParamId id : order) {
      auto& p = params.at(id);
      p.steps = static_cast<std::int64_t>(get_u64(in, p.name + " steps"));
      if (in.get() == 1) p.m = get_tensor_data(in, p.value.rows(), p.value.cols(), p.name + " m");
      if (in.get() == 1) p.v = get_tensor_data(in, p.value.rows(), p.value.cols(), p.name + " v");
      if (!in) throw IoError("checkpoint truncated in optimizer state");
    }
    tail = get_line(in, "end marker");
  }
  if (tail != "end") throw IoError("checkpoint missing end marker");
  return params;
}

ParameterSet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

}  // namespace gsnn
