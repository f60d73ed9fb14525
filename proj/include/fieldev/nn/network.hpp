#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fieldev/nn/tensor.hpp"

namespace fieldev::nn {

enum class NetworkVariant { Small, Large };

// Layer widths are hyperparameters; the defaults are not read off any figure.
struct NetworkSpec {
  NetworkVariant variant = NetworkVariant::Small;
  // Shared valid-padding convolutions. The large variant follows them with
  // residual blocks in place of a final convolution.
  std::vector<int> trunk_filters = {16, 32, 32};
  int kernel = 3;
  int residual_blocks = 0;
  // First layer of each arm: valid convolution whose output is joined with
  // the vector-branch embedding.
  int arm_filters = 16;
  int arm_kernel = 3;
  std::vector<int> arm_dense = {64};
  std::vector<int> vector_dense = {16, 16};
  // Scales the initial head weights so the first policy is near uniform.
  double head_init_scale = 0.01;

  static NetworkSpec small();
  static NetworkSpec large();

  // Throws ShapeError / InvalidArgument on inconsistent settings.
  void validate() const;
  std::string canonical() const;
};

const char* to_string(NetworkVariant v) noexcept;

struct PolicyOutput {
  std::array<double, 3> decision_logits{};
  std::vector<double> location_logits;
  double value = 0.0;
};

// d loss / d outputs.
struct OutputGrad {
  std::array<double, 3> decision{};
  std::vector<double> location;
  double value = 0.0;
};

// Activations recorded by a forward pass and consumed by backward.
struct ForwardCache {
  bool valid = false;
  Tensor input;                 // (4,H,W)
  std::vector<Tensor> trunk;    // conv outputs after ReLU
  struct Residual {
    Tensor input, hidden, output;
  };
  std::vector<Residual> residual;
  Tensor vec_in;
  std::vector<Tensor> vec_hidden;
  struct Arm {
    Tensor conv;        // post-ReLU
    Tensor embed;       // vector embedding copy
    Tensor joined;
    std::vector<Tensor> hidden;
  };
  Arm policy, value;
};

// Policy/value network: shared conv trunk, policy and value arms whose first
// convolution output is concatenated with a dense embedding of the 3-vector.
class Network {
 public:
  Network(NetworkSpec spec, int nx, int ny);

  const NetworkSpec& spec() const noexcept { return spec_; }
  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  std::uint64_t spec_hash() const;

  // He-uniform weights, zero biases; deterministic in `seed`.
  ParamSet init_params(std::uint64_t seed) const;
  ParamSet zero_params() const;

  // maps is (ny, nx, 4) channel-last; vec has 3 entries.
  PolicyOutput forward(const ParamSet& params, std::span<const double> maps,
                       std::span<const double> vec, ForwardCache* cache = nullptr) const;

  // Throws LifecycleError if `cache` was not filled by forward.
  ParamSet backward(const ParamSet& params, const ForwardCache& cache,
                    const OutputGrad& grad) const;
  // Accumulating variant.
  void backward_into(const ParamSet& params, const ForwardCache& cache, const OutputGrad& grad,
                     ParamSet& grads) const;

  const std::vector<std::string>& param_names() const noexcept { return names_; }
  const std::vector<std::vector<std::size_t>>& param_shapes() const noexcept { return shapes_; }

 private:
  struct ArmLayout {
    std::size_t conv = 0;                // weight index; bias at +1
    std::vector<std::size_t> dense;      // weight indices
  };

  std::size_t declare(const std::string& name, std::vector<std::size_t> shape);
  void forward_arm(const ParamSet& p, const ArmLayout& layout, const Tensor& trunk,
                   const Tensor& embed, ForwardCache::Arm& arm) const;
  void backward_arm(const ParamSet& p, const ArmLayout& layout, const ForwardCache::Arm& arm,
                    const Tensor& trunk, const Tensor& d_last, ParamSet& g, Tensor& d_trunk,
                    Tensor& d_embed) const;

  NetworkSpec spec_;
  int nx_, ny_;
  std::vector<std::string> names_;
  std::vector<std::vector<std::size_t>> shapes_;
  std::vector<std::size_t> trunk_idx_;
  std::vector<std::array<std::size_t, 2>> residual_idx_;
  std::vector<std::size_t> vector_idx_;
  ArmLayout policy_, value_;
  std::size_t decision_head_ = 0, location_head_ = 0, value_head_ = 0;
};

}  // namespace fieldev::nn
