#include "amdm/params.hpp"

#include <cmath>
#include <stdexcept>

namespace amdm {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw std::invalid_argument("params: duplicate name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(name); }

const Tensor& ParamStore::get(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("params: no entry '" + std::string(name) + "'");
  return entries_[it->second].second;
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

std::size_t ParamStore::element_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

bool ParamStore::all_finite() const noexcept {
  for (const auto& [name, t] : entries_)
    if (!t.all_finite()) return false;
  return true;
}

ad::Var TracedParams::operator()(std::string_view name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  ad::Var v = graph_.param(std::string(name), store_.get(name));
  vars_.emplace(std::string(name), v);
  return v;
}

Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in) {
  return normal_tensor(rng, std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)));
}

}  // namespace amdm
