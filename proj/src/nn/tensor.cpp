#include "fieldev/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fieldev/errors.hpp"

namespace fieldev::nn {

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) +
                     " values for shape " + shape_string());
  }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::string s = "(";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape_[i]);
  }
  return s + ")";
}

std::size_t ParamSet::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  out.names = names;
  out.tensors.reserve(tensors.size());
  for (const auto& t : tensors) out.tensors.emplace_back(t.shape());
  return out;
}

void ParamSet::add_scaled(const ParamSet& other, double s) {
  if (other.tensors.size() != tensors.size()) throw ShapeError("parameter set size mismatch");
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto dst = tensors[k].values();
    auto src = other.tensors[k].values();
    if (dst.size() != src.size()) throw ShapeError("parameter " + names[k] + " size mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
  }
}

void ParamSet::scale(double factor) {
  for (auto& t : tensors) {
    for (auto& v : t.values()) v *= factor;
  }
}

bool ParamSet::all_finite() const noexcept {
  return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
}

double ParamSet::squared_norm() const noexcept {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (double v : t.values()) s += v * v;
  }
  return s;
}

}  // namespace fieldev::nn
