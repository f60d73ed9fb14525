#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fieldev::nn {

// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(double v);
  bool all_finite() const noexcept;
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_size(const std::vector<std::size_t>& shape) noexcept;

// Parameters (or gradients) in declaration order.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor> tensors;

  std::size_t size() const noexcept { return tensors.size(); }
  std::size_t scalar_count() const noexcept;
  ParamSet zeros_like() const;
  // this += scale * other
  void add_scaled(const ParamSet& other, double scale);
  void scale(double factor);
  bool all_finite() const noexcept;
  double squared_norm() const noexcept;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

}  // namespace fieldev::nn
