#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "aiwdn/matrix.hpp"

namespace aiwdn::ad {

// Dense row-major tensor. Only the 2-D shapes the models need are exercised,
// but shape is kept general for the container format.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::vector<int> s, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> values);     // 1 x n
  static Tensor column(std::vector<double> values);  // n x 1

  std::size_t numel() const;
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  void set_requires_grad(bool on);
  void zero_grad();
};

Tensor tensor_from_matrix(const Matrix& m);
Matrix matrix_from_tensor(const Tensor& t);

// Uniform init on [-limit, limit].
Tensor random_uniform(std::vector<int> shape, double limit, std::uint64_t seed);
// Glorot-style limit sqrt(6 / (fan_in + fan_out)) for a rows x cols map.
Tensor glorot(int rows, int cols, std::uint64_t seed);

// Handle into a Tape.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Append-only reverse-mode tape. Creation order is the topological order;
// backward() visits nodes exactly once in reverse.
class Tape {
 public:
  // Leaves. `param` binds to external storage and accumulates into
  // storage->grad on backward when storage->requires_grad is set; `input`
  // owns a tracked copy whose adjoint is readable via grad().
  Value constant(Tensor t);
  Value param(Tensor* storage);
  Value input(Tensor t);

  Value matmul(Value a, Value b);
  Value add(Value a, Value b);  // same shape, or b broadcast from (1,c) or (1,1)
  Value scale(Value a, double s);
  Value relu(Value a);
  Value concat(Value a, Value b, int axis);
  Value slice_rows(Value a, std::vector<int> rows);
  Value transpose(Value a);
  Value reshape(Value a, std::vector<int> shape);
  Value reduce_max_rows(Value a);
  // values: (m, c); segments: length m with ids in [0, num_segments).
  // out[s][j] = max over {i : segments[i] == s} of values[i][j]; empty
  // segments contribute 0. Gradient goes to the first argmax row only.
  Value masked_segment_max(Value values, std::vector<int> segments, int num_segments);
  Value sum(Value a);
  Value mse_loss(Value pred, const Tensor& target);
  Value bce_with_logits(Value logits, const Tensor& targets);
  Value softmax_cross_entropy(Value logits, const std::vector<int>& target_index);

  const Tensor& value(Value v) const;
  const std::vector<double>& grad(Value v) const;

  // Root must be scalar. Seeds the root adjoint with 1 and sweeps the tape.
  void backward(Value root);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor val;
    std::vector<double> adjoint;
    std::function<void(Tape&)> back;
    bool tracked = false;
  };

  Value push(Tensor val, bool tracked, std::function<void(Tape&)> back);
  std::vector<double>& adjoint_of(int idx);
  void accumulate(int idx, const std::vector<double>& delta);

  std::vector<Node> nodes_;
  std::vector<Tensor*> bound_params_;
};

// Central finite differences against reverse mode for a scalar-valued tensor
// function. Returns max over coordinates of
// |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x,
                  double eps = 1e-5);

}  // namespace aiwdn::ad
