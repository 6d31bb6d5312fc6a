#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "amdm/autodiff.hpp"
#include "amdm/random.hpp"
#include "amdm/tensor.hpp"

namespace amdm {

/// Named parameter tensors in registration order.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t element_count() const noexcept;
  bool all_finite() const noexcept;

  std::vector<Entry>::iterator begin() { return entries_.begin(); }
  std::vector<Entry>::iterator end() { return entries_.end(); }
  std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  std::vector<Entry>::const_iterator end() const { return entries_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.entries_ == b.entries_;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Lazily registers store entries as parameter leaves of one graph.
class TracedParams {
 public:
  TracedParams(ad::Graph& graph, const ParamStore& store) : graph_(graph), store_(store) {}
  ad::Var operator()(std::string_view name);

 private:
  ad::Graph& graph_;
  const ParamStore& store_;
  std::map<std::string, ad::Var, std::less<>> vars_;
};

/// He-normal weights (std sqrt(2 / fan_in)).
Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in);

}  // namespace amdm
