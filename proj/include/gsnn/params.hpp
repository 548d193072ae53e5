#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gsnn/numeric.hpp"

namespace gsnn {

using ParamId = std::size_t;

struct Parameter {
  std::string name;
  Tensor2 value;
  Tensor2 grad;  // empty until zero_grad() or a reduce populates it
  Tensor2 m;     // momentum / first moment
  Tensor2 v;     // second moment (ADAM)
  std::int64_t steps = 0;
};

/// Per-example gradient storage aligned with a ParameterSet; slots outside the
/// requested subset stay empty.
using GradientBuffer = std::vector<Tensor2>;

/// Named learned tensors with gradient and optimizer-state slots. Ids are
/// insertion indices; checkpoints order parameters by name.
class ParameterSet {
 public:
  ParamId add(const std::string& name, Tensor2 value);

  std::size_t size() const noexcept { return params_.size(); }
  std::optional<ParamId> find(const std::string& name) const;
  ParamId id(const std::string& name) const;

  Parameter& at(ParamId id) { return params_.at(id); }
  const Parameter& at(ParamId id) const { return params_.at(id); }
  Tensor2& value(ParamId id) { return params_[id].value; }
  const Tensor2& value(ParamId id) const { return params_[id].value; }
  Tensor2& grad(ParamId id) { return params_[id].grad; }

  const std::vector<Parameter>& all() const noexcept { return params_; }
  std::vector<ParamId> ids() const;
  std::vector<ParamId> ids_with_prefix(const std::string& prefix) const;
  // Ids sorted by parameter name.
  std::vector<ParamId> ids_by_name() const;

  void zero_grad();
  // Zero-filled buffer; only ids in `subset` are allocated (all when empty).
  GradientBuffer make_gradient_buffer(const std::vector<ParamId>& subset = {}) const;
  // grad += buffer for every allocated slot; grads must be zeroed first.
  void accumulate(const GradientBuffer& buffer);

  std::size_t scalar_count() const;

  // Copies values (and optimizer state when present in `other`) by name.
  // Throws DimensionError on a shape mismatch and StateError on a missing name.
  void assign_from(const ParameterSet& other, bool with_state);

 private:
  std::vector<Parameter> params_;
  std::map<std::string, ParamId> index_;
};

// Checkpoint: text header "GSNN-CKPT v1", then binary records ordered by name.
void save_checkpoint(const ParameterSet& params, std::ostream& out, bool with_state = false);
void save_checkpoint(const ParameterSet& params, const std::filesystem::path& path, bool with_state = false);
ParameterSet load_checkpoint(std::istream& in);
ParameterSet load_checkpoint(const std::filesystem::path& path);

}  // namespace gsnn
