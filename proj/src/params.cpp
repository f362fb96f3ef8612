#include "mmformer/params.hpp"

#include <stdexcept>

namespace mmf {

Tensor& ParamSet::add(const std::string& name, Tensor value, bool trainable) {
  if (contains(name)) throw std::invalid_argument("ParamSet: duplicate parameter " + name);
  index_.emplace(name, names_.size());
  names_.push_back(name);
  values_.push_back(std::make_unique<Tensor>(std::move(value)));
  trainable_.push_back(trainable);
  return *values_.back();
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: unknown parameter " + name);
  return *values_[it->second];
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: unknown parameter " + name);
  return *values_[it->second];
}

std::size_t ParamSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamSet: unknown parameter " + name);
  return it->second;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t total = 0;
  for (const auto& v : values_) total += v->size();
  return total;
}

ad::Var Binding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const std::size_t k = params_.index_of(name);
  ad::Var v = tape_.leaf_ref(params_.value(k), requires_grad_ && params_.trainable(k));
  bound_.emplace(name, v);
  return v;
}

void Binding::bind_as(const std::string& name, ad::Var v) {
  if (!params_.contains(name)) throw std::out_of_range("Binding: unknown parameter " + name);
  bound_[name] = v;
}

std::vector<Tensor> Binding::gradients() {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto it = bound_.find(params_.name(k));
    out.push_back(it == bound_.end() ? Tensor(params_.value(k).shape(), 0.0)
                                     : tape_.grad(it->second));
  }
  return out;
}

}  // namespace mmf
