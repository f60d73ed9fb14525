#include "fieldev/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fieldev/errors.hpp"

namespace fieldev::nn {

namespace {

void require(bool ok, const char* layer, const std::string& detail) {
  if (!ok) throw ShapeError(std::string(layer) + ": " + detail);
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad) {
  require(input.rank() == 3 && weight.rank() == 4, "conv2d",
          "expects input (C,H,W) and weight (O,C,K,K), got " + input.shape_string() + " and " +
              weight.shape_string());
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  require(weight.dim(1) == c_in && weight.dim(3) == k, "conv2d",
          "weight " + weight.shape_string() + " does not match input " + input.shape_string());
  require(bias.size() == c_out, "conv2d", "bias size mismatch");
  const long ho = static_cast<long>(h) + 2 * pad - static_cast<long>(k) + 1;
  const long wo = static_cast<long>(w) + 2 * pad - static_cast<long>(k) + 1;
  require(ho > 0 && wo > 0, "conv2d", "kernel larger than padded input " + input.shape_string());

  Tensor out({c_out, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  const double* in = input.data();
  const double* wt = weight.data();
  double* o = out.data();
  const long H = static_cast<long>(h), W = static_cast<long>(w), K = static_cast<long>(k);
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    double* plane = o + oc * ho * wo;
    std::fill(plane, plane + ho * wo, bias[oc]);
    for (std::size_t ic = 0; ic < c_in; ++ic) {
      const double* src = in + ic * h * w;
      for (long ky = 0; ky < K; ++ky) {
        for (long kx = 0; kx < K; ++kx) {
          const double wv = wt[((oc * c_in + ic) * k + ky) * k + kx];
          const long x0 = std::max(0L, pad - kx);
          const long x1 = std::min(wo, W + pad - kx);
          for (long y = 0; y < ho; ++y) {
            const long iy = y + ky - pad;
            if (iy < 0 || iy >= H) continue;
            double* dst = plane + y * wo;
            const double* row = src + iy * W;
            const long shift = kx - pad;
            for (long x = x0; x < x1; ++x) dst[x] += wv * row[x + shift];
          }
        }
      }
    }
  }
  return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weight, int pad, const Tensor& d_out,
                     Tensor* d_input, Tensor& d_weight, Tensor& d_bias) {
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  const long ho = static_cast<long>(d_out.dim(1)), wo = static_cast<long>(d_out.dim(2));
  const long H = static_cast<long>(h), W = static_cast<long>(w), K = static_cast<long>(k);
  const double* in = input.data();
  const double* wt = weight.data();
  const double* g = d_out.data();
  double* dw = d_weight.data();
  double* din = d_input ? d_input->data() : nullptr;
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    const double* gplane = g + oc * ho * wo;
    double bsum = 0.0;
    for (long i = 0; i < ho * wo; ++i) bsum += gplane[i];
    d_bias[oc] += bsum;
    for (std::size_t ic = 0; ic < c_in; ++ic) {
      const double* src = in + ic * h * w;
      double* dsrc = din ? din + ic * h * w : nullptr;
      for (long ky = 0; ky < K; ++ky) {
        for (long kx = 0; kx < K; ++kx) {
          const std::size_t widx = ((oc * c_in + ic) * k + ky) * k + kx;
          const double wv = wt[widx];
          const long x0 = std::max(0L, pad - kx);
          const long x1 = std::min(wo, W + pad - kx);
          double acc = 0.0;
          for (long y = 0; y < ho; ++y) {
            const long iy = y + ky - pad;
            if (iy < 0 || iy >= H) continue;
            const double* grow = gplane + y * wo;
            const double* row = src + iy * W;
            const long shift = kx - pad;
            for (long x = x0; x < x1; ++x) acc += grow[x] * row[x + shift];
            if (dsrc) {
              double* drow = dsrc + iy * W;
              for (long x = x0; x < x1; ++x) drow[x + shift] += wv * grow[x];
            }
          }
          dw[widx] += acc;
        }
      }
    }
  }
}

Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require(weight.rank() == 2 && weight.dim(1) == x.size(), "dense",
          "weight " + weight.shape_string() + " does not accept input of size " +
              std::to_string(x.size()));
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  require(bias.size() == m, "dense", "bias size mismatch");
  Tensor y({m});
  const double* w = weight.data();
  const double* in = x.data();
  for (std::size_t r = 0; r < m; ++r) {
    double acc = bias[r];
    const double* row = w + r * n;
    for (std::size_t c = 0; c < n; ++c) acc += row[c] * in[c];
    y[r] = acc;
  }
  return y;
}

void dense_backward(const Tensor& x, const Tensor& weight, const Tensor& d_out, Tensor* d_x,
                    Tensor& d_weight, Tensor& d_bias) {
  const std::size_t m = weight.dim(0), n = weight.dim(1);
  const double* w = weight.data();
  const double* in = x.data();
  double* dw = d_weight.data();
  for (std::size_t r = 0; r < m; ++r) {
    const double g = d_out[r];
    d_bias[r] += g;
    if (g == 0.0) continue;
    double* drow = dw + r * n;
    for (std::size_t c = 0; c < n; ++c) drow[c] += g * in[c];
    if (d_x) {
      const double* row = w + r * n;
      double* dx = d_x->data();
      for (std::size_t c = 0; c < n; ++c) dx[c] += g * row[c];
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& output, const Tensor& d_out) {
  Tensor d = d_out;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!(output[i] > 0.0)) d[i] = 0.0;
  }
  return d;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "residual add",
          "shapes " + a.shape_string() + " and " + b.shape_string() + " differ");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  std::vector<double> joined;
  joined.reserve(a.size() + b.size());
  joined.insert(joined.end(), a.storage().begin(), a.storage().end());
  joined.insert(joined.end(), b.storage().begin(), b.storage().end());
  const std::size_t n = joined.size();
  return Tensor({n}, std::move(joined));
}

void split(const Tensor& d_joined, Tensor& d_a, Tensor& d_b) {
  require(d_joined.size() == d_a.size() + d_b.size(), "concat", "gradient size mismatch");
  std::copy_n(d_joined.data(), d_a.size(), d_a.data());
  std::copy_n(d_joined.data() + d_a.size(), d_b.size(), d_b.data());
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

double softmax_cross_entropy(std::span<const double> logits, int target,
                             std::vector<double>* grad) {
  require(target >= 0 && static_cast<std::size_t>(target) < logits.size(), "softmax_cross_entropy",
          "target out of range");
  const auto logp = log_softmax(logits);
  if (grad) {
    grad->resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) (*grad)[i] = std::exp(logp[i]);
    (*grad)[target] -= 1.0;
  }
  return -logp[target];
}

}  // namespace fieldev::nn
