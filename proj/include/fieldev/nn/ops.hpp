#pragma once

#include <span>
#include <vector>

#include "fieldev/nn/tensor.hpp"

// Single-sample layer primitives with hand-written gradients. Backward
// functions accumulate into the gradient tensors they are given.
namespace fieldev::nn {

// input (C,H,W), weight (O,C,K,K), bias (O); stride 1, symmetric zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int pad);
void conv2d_backward(const Tensor& input, const Tensor& weight, int pad, const Tensor& d_out,
                     Tensor* d_input, Tensor& d_weight, Tensor& d_bias);

// x (N), weight (M,N), bias (M).
Tensor dense(const Tensor& x, const Tensor& weight, const Tensor& bias);
void dense_backward(const Tensor& x, const Tensor& weight, const Tensor& d_out, Tensor* d_x,
                    Tensor& d_weight, Tensor& d_bias);

Tensor relu(const Tensor& x);
// Uses the forward output: gradient passes where output > 0.
Tensor relu_backward(const Tensor& output, const Tensor& d_out);

Tensor add(const Tensor& a, const Tensor& b);

// Flattens and joins two tensors into a rank-1 tensor.
Tensor concat(const Tensor& a, const Tensor& b);
// Splits a concat gradient back into the two operand shapes.
void split(const Tensor& d_joined, Tensor& d_a, Tensor& d_b);

std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

// -log softmax(logits)[target]; writes d loss / d logits into `grad` when given.
double softmax_cross_entropy(std::span<const double> logits, int target,
                             std::vector<double>* grad = nullptr);

}  // namespace fieldev::nn
