#include "aiwdn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aiwdn/rng.hpp"

namespace aiwdn::ad {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

[[noreturn]] void shape_error(const std::string& op, const std::vector<int>& a,
                              const std::vector<int>& b) {
  throw std::invalid_argument(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

std::size_t numel_of(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)) {
  data.assign(numel_of(shape), fill);
}

Tensor Tensor::scalar(double v) {
  Tensor t({1, 1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  Tensor t;
  t.shape = {1, static_cast<int>(values.size())};
  t.data = std::move(values);
  return t;
}

Tensor Tensor::column(std::vector<double> values) {
  Tensor t;
  t.shape = {static_cast<int>(values.size()), 1};
  t.data = std::move(values);
  return t;
}

std::size_t Tensor::numel() const { return numel_of(shape); }

void Tensor::set_requires_grad(bool on) {
  requires_grad = on;
  if (on) {
    grad.assign(numel(), 0.0);
  } else {
    grad.clear();
  }
}

void Tensor::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Tensor tensor_from_matrix(const Matrix& m) {
  Tensor t;
  t.shape = {m.rows(), m.cols()};
  t.data = m.data();
  return t;
}

Matrix matrix_from_tensor(const Tensor& t) {
  Matrix m(t.rows(), t.cols());
  m.data() = t.data;
  return m;
}

Tensor random_uniform(std::vector<int> shape, double limit, std::uint64_t seed) {
  Tensor t(std::move(shape));
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.data) v = dist(rng);
  return t;
}

Tensor glorot(int rows, int cols, std::uint64_t seed) {
  const double limit = std::sqrt(6.0 / (rows + cols));
  return random_uniform({rows, cols}, limit, seed);
}

Value Tape::push(Tensor val, bool tracked, std::function<void(Tape&)> back) {
  Node node;
  node.val = std::move(val);
  node.tracked = tracked;
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::adjoint_of(int idx) {
  Node& n = nodes_[idx];
  if (n.adjoint.empty()) n.adjoint.assign(n.val.numel(), 0.0);
  return n.adjoint;
}

void Tape::accumulate(int idx, const std::vector<double>& delta) {
  auto& adj = adjoint_of(idx);
  for (std::size_t i = 0; i < delta.size(); ++i) adj[i] += delta[i];
}

Value Tape::constant(Tensor t) { return push(std::move(t), false, nullptr); }

Value Tape::param(Tensor* storage) {
  const bool tracked = storage->requires_grad;
  Value v = push(*storage, tracked, nullptr);
  const int idx = v.idx;
  if (tracked) {
    nodes_[idx].back = [idx, storage](Tape& tape) {
      const auto& adj = tape.nodes_[idx].adjoint;
      if (adj.empty()) return;
      for (std::size_t i = 0; i < adj.size(); ++i) storage->grad[i] += adj[i];
    };
    bound_params_.push_back(storage);
  }
  return v;
}

Value Tape::input(Tensor t) { return push(std::move(t), true, nullptr); }

const Tensor& Tape::value(Value v) const { return nodes_.at(v.idx).val; }

const std::vector<double>& Tape::grad(Value v) const {
  static const std::vector<double> kEmpty;
  const Node& n = nodes_.at(v.idx);
  return n.adjoint.empty() ? kEmpty : n.adjoint;
}

void Tape::backward(Value root) {
  Node& r = nodes_.at(root.idx);
  if (r.val.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
  adjoint_of(root.idx).assign(1, 1.0);
  for (int i = root.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.tracked || n.adjoint.empty() || !n.back) continue;
    n.back(*this);
  }
}

Value Tape::matmul(Value av, Value bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (a.shape.size() != 2 || b.shape.size() != 2 || a.cols() != b.rows())
    shape_error("matmul", a.shape, b.shape);
  const int n = a.rows(), k = a.cols(), m = b.cols();

  Tensor out({n, m});
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < k; ++p) {
      const double x = a.data[static_cast<std::size_t>(i) * k + p];
      if (x == 0.0) continue;
      const double* brow = b.data.data() + static_cast<std::size_t>(p) * m;
      double* orow = out.data.data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) orow[j] += x * brow[j];
    }
  }

  const bool tracked = nodes_[av.idx].tracked || nodes_[bv.idx].tracked;
  const int ai = av.idx, bi = bv.idx;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, bi, oi, n, k, m](Tape& tape) {
    const auto& up = tape.nodes_[oi].adjoint;  // n x m
    const auto& a = tape.nodes_[ai].val.data;  // n x k
    const auto& b = tape.nodes_[bi].val.data;  // k x m
    if (tape.nodes_[ai].tracked) {
      auto& adj = tape.adjoint_of(ai);  // dA = up B^T
      for (int i = 0; i < n; ++i) {
        const double* urow = up.data() + static_cast<std::size_t>(i) * m;
        double* arow = adj.data() + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
          const double* brow = b.data() + static_cast<std::size_t>(p) * m;
          double s = 0.0;
          for (int j = 0; j < m; ++j) s += urow[j] * brow[j];
          arow[p] += s;
        }
      }
    }
    if (tape.nodes_[bi].tracked) {
      auto& adj = tape.adjoint_of(bi);  // dB = A^T up
      for (int i = 0; i < n; ++i) {
        const double* arow = a.data() + static_cast<std::size_t>(i) * k;
        const double* urow = up.data() + static_cast<std::size_t>(i) * m;
        for (int p = 0; p < k; ++p) {
          const double x = arow[p];
          if (x == 0.0) continue;
          double* drow = adj.data() + static_cast<std::size_t>(p) * m;
          for (int j = 0; j < m; ++j) drow[j] += x * urow[j];
        }
      }
    }
  };
  return ov;
}

Value Tape::add(Value av, Value bv) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  const int r = a.rows(), c = a.cols();
  const bool same = a.shape == b.shape;
  const bool row_bcast = !same && b.rows() == 1 && b.cols() == c;
  const bool scalar_bcast = !same && b.numel() == 1;
  if (a.shape.size() != 2 || (!same && !row_bcast && !scalar_bcast))
    shape_error("add", a.shape, b.shape);

  Tensor out = a;
  if (same) {
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  } else if (row_bcast) {
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) out.data[static_cast<std::size_t>(i) * c + j] += b.data[j];
  } else {
    for (double& v : out.data) v += b.data[0];
  }

  const bool tracked = nodes_[av.idx].tracked || nodes_[bv.idx].tracked;
  const int ai = av.idx, bi = bv.idx;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, bi, oi, r, c, same, row_bcast](Tape& tape) {
    const auto& up = tape.nodes_[oi].adjoint;
    if (tape.nodes_[ai].tracked) tape.accumulate(ai, up);
    if (tape.nodes_[bi].tracked) {
      auto& badj = tape.adjoint_of(bi);
      if (same) {
        for (std::size_t i = 0; i < up.size(); ++i) badj[i] += up[i];
      } else if (row_bcast) {
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) badj[j] += up[static_cast<std::size_t>(i) * c + j];
      } else {
        for (double u : up) badj[0] += u;
      }
    }
  };
  return ov;
}

Value Tape::scale(Value av, double s) {
  Tensor out = value(av);
  for (double& v : out.data) v *= s;
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, s](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    auto& adj = tape.adjoint_of(ai);
    for (std::size_t i = 0; i < up.size(); ++i) adj[i] += s * up[i];
  };
  return ov;
}

Value Tape::relu(Value av) {
  Tensor out = value(av);
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    const auto& x = tape.nodes_[ai].val.data;
    auto& adj = tape.adjoint_of(ai);
    for (std::size_t i = 0; i < up.size(); ++i)
      if (x[i] > 0.0) adj[i] += up[i];
  };
  return ov;
}

Value Tape::concat(Value av, Value bv, int axis) {
  const Tensor& a = value(av);
  const Tensor& b = value(bv);
  if (a.shape.size() != 2 || b.shape.size() != 2) shape_error("concat", a.shape, b.shape);
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  if (axis == 0 && a.cols() != b.cols()) shape_error("concat", a.shape, b.shape);
  if (axis == 1 && a.rows() != b.rows()) shape_error("concat", a.shape, b.shape);

  Tensor out;
  if (axis == 0) {
    out = Tensor({a.rows() + b.rows(), a.cols()});
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  } else {
    out = Tensor({a.rows(), a.cols() + b.cols()});
    const int ac = a.cols(), bc = b.cols(), oc = ac + bc;
    for (int i = 0; i < a.rows(); ++i) {
      std::copy(a.data.begin() + static_cast<std::size_t>(i) * ac,
                a.data.begin() + static_cast<std::size_t>(i + 1) * ac,
                out.data.begin() + static_cast<std::size_t>(i) * oc);
      std::copy(b.data.begin() + static_cast<std::size_t>(i) * bc,
                b.data.begin() + static_cast<std::size_t>(i + 1) * bc,
                out.data.begin() + static_cast<std::size_t>(i) * oc + ac);
    }
  }

  const bool tracked = nodes_[av.idx].tracked || nodes_[bv.idx].tracked;
  const int ai = av.idx, bi = bv.idx;
  const int ar = a.rows(), ac = a.cols(), bc = b.cols();
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, bi, oi, axis, ar, ac, bc](Tape& tape) {
    const auto& up = tape.nodes_[oi].adjoint;
    const std::size_t a_numel = tape.nodes_[ai].val.numel();
    if (axis == 0) {
      if (tape.nodes_[ai].tracked) {
        auto& adj = tape.adjoint_of(ai);
        for (std::size_t i = 0; i < a_numel; ++i) adj[i] += up[i];
      }
      if (tape.nodes_[bi].tracked) {
        auto& adj = tape.adjoint_of(bi);
        for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += up[a_numel + i];
      }
    } else {
      const int oc = ac + bc;
      if (tape.nodes_[ai].tracked) {
        auto& adj = tape.adjoint_of(ai);
        for (int i = 0; i < ar; ++i)
          for (int j = 0; j < ac; ++j)
            adj[static_cast<std::size_t>(i) * ac + j] += up[static_cast<std::size_t>(i) * oc + j];
      }
      if (tape.nodes_[bi].tracked) {
        auto& adj = tape.adjoint_of(bi);
        for (int i = 0; i < ar; ++i)
          for (int j = 0; j < bc; ++j)
            adj[static_cast<std::size_t>(i) * bc + j] +=
                up[static_cast<std::size_t>(i) * oc + ac + j];
      }
    }
  };
  return ov;
}

Value Tape::slice_rows(Value av, std::vector<int> rows) {
  const Tensor& a = value(av);
  if (a.shape.size() != 2) throw std::invalid_argument("slice_rows: need 2-D input");
  const int c = a.cols();
  for (int r : rows)
    if (r < 0 || r >= a.rows())
      throw std::invalid_argument("slice_rows: row index " + std::to_string(r) + " out of range");

  Tensor out({static_cast<int>(rows.size()), c});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(a.data.begin() + static_cast<std::size_t>(rows[i]) * c,
              a.data.begin() + static_cast<std::size_t>(rows[i] + 1) * c,
              out.data.begin() + i * c);

  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, rows = std::move(rows), c](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    auto& adj = tape.adjoint_of(ai);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < c; ++j)
        adj[static_cast<std::size_t>(rows[i]) * c + j] += up[i * c + j];
  };
  return ov;
}

Value Tape::transpose(Value av) {
  const Tensor& a = value(av);
  if (a.shape.size() != 2) throw std::invalid_argument("transpose: need 2-D input");
  const int r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out.data[static_cast<std::size_t>(j) * r + i] = a.data[static_cast<std::size_t>(i) * c + j];
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, r, c](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    auto& adj = tape.adjoint_of(ai);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j)
        adj[static_cast<std::size_t>(i) * c + j] += up[static_cast<std::size_t>(j) * r + i];
  };
  return ov;
}

Value Tape::reshape(Value av, std::vector<int> shape) {
  const Tensor& a = value(av);
  if (numel_of(shape) != a.numel()) shape_error("reshape", a.shape, shape);
  Tensor out = a;
  out.shape = std::move(shape);
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    tape.accumulate(ai, tape.nodes_[oi].adjoint);
  };
  return ov;
}

Value Tape::reduce_max_rows(Value av) {
  const Tensor& a = value(av);
  if (a.shape.size() != 2 || a.cols() < 1)
    throw std::invalid_argument("reduce_max_rows: need non-empty 2-D input");
  const int r = a.rows(), c = a.cols();
  Tensor out({r, 1});
  std::vector<int> argmax(r, 0);
  for (int i = 0; i < r; ++i) {
    const double* row = a.data.data() + static_cast<std::size_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j)
      if (row[j] > row[best]) best = j;  // first index wins on ties
    argmax[i] = best;
    out.data[i] = row[best];
  }
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, argmax = std::move(argmax), c](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    auto& adj = tape.adjoint_of(ai);
    for (std::size_t i = 0; i < up.size(); ++i)
      adj[i * c + argmax[i]] += up[i];
  };
  return ov;
}

Value Tape::masked_segment_max(Value values, std::vector<int> segments, int num_segments) {
  const Tensor& a = value(values);
  if (a.shape.size() != 2) throw std::invalid_argument("masked_segment_max: need 2-D values");
  if (static_cast<int>(segments.size()) != a.rows())
    throw std::invalid_argument("masked_segment_max: segment list length != row count");
  const int c = a.cols();

  Tensor out({num_segments, c});
  // -1 marks an empty (segment, column) slot; the max identity is replaced
  // by a zero contribution.
  std::vector<int> argmax(static_cast<std::size_t>(num_segments) * c, -1);
  for (int i = 0; i < a.rows(); ++i) {
    const int s = segments[i];
    if (s < 0 || s >= num_segments)
      throw std::invalid_argument("masked_segment_max: segment id out of range");
    const double* row = a.data.data() + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      const std::size_t slot = static_cast<std::size_t>(s) * c + j;
      if (argmax[slot] < 0 || row[j] > out.data[slot]) {
        out.data[slot] = row[j];
        argmax[slot] = i;
      }
    }
  }
  for (std::size_t slot = 0; slot < argmax.size(); ++slot)
    if (argmax[slot] < 0) out.data[slot] = 0.0;

  const int ai = values.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(std::move(out), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, argmax = std::move(argmax), c](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const auto& up = tape.nodes_[oi].adjoint;
    auto& adj = tape.adjoint_of(ai);
    for (std::size_t slot = 0; slot < argmax.size(); ++slot) {
      const int i = argmax[slot];
      if (i < 0) continue;
      adj[static_cast<std::size_t>(i) * c + (slot % c)] += up[slot];
    }
  };
  return ov;
}

Value Tape::sum(Value av) {
  const Tensor& a = value(av);
  double total = 0.0;
  for (double v : a.data) total += v;
  const int ai = av.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(Tensor::scalar(total), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const double up = tape.nodes_[oi].adjoint[0];
    auto& adj = tape.adjoint_of(ai);
    for (double& v : adj) v += up;
  };
  return ov;
}

Value Tape::mse_loss(Value pred, const Tensor& target) {
  const Tensor& p = value(pred);
  if (p.shape != target.shape) shape_error("mse_loss", p.shape, target.shape);
  const std::size_t n = p.numel();
  if (n == 0) throw std::invalid_argument("mse_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p.data[i] - target.data[i];
    total += d * d;
  }
  const int ai = pred.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(Tensor::scalar(total / static_cast<double>(n)), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, target](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const double up = tape.nodes_[oi].adjoint[0];
    const auto& x = tape.nodes_[ai].val.data;
    auto& adj = tape.adjoint_of(ai);
    const double inv = 2.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) adj[i] += up * inv * (x[i] - target.data[i]);
  };
  return ov;
}

Value Tape::bce_with_logits(Value logits, const Tensor& targets) {
  const Tensor& x = value(logits);
  if (x.shape != targets.shape) shape_error("bce_with_logits", x.shape, targets.shape);
  const std::size_t n = x.numel();
  if (n == 0) throw std::invalid_argument("bce_with_logits: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.data[i], t = targets.data[i];
    total += std::max(v, 0.0) - v * t + std::log1p(std::exp(-std::fabs(v)));
  }
  const int ai = logits.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(Tensor::scalar(total / static_cast<double>(n)), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, targets](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const double up = tape.nodes_[oi].adjoint[0];
    const auto& x = tape.nodes_[ai].val.data;
    auto& adj = tape.adjoint_of(ai);
    const double inv = 1.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-x[i]));
      adj[i] += up * inv * (sig - targets.data[i]);
    }
  };
  return ov;
}

Value Tape::softmax_cross_entropy(Value logits, const std::vector<int>& target_index) {
  const Tensor& x = value(logits);
  if (x.shape.size() != 2) throw std::invalid_argument("softmax_cross_entropy: need 2-D logits");
  const int r = x.rows(), c = x.cols();
  if (static_cast<int>(target_index.size()) != r)
    throw std::invalid_argument("softmax_cross_entropy: target count != row count");

  std::vector<double> softmax(static_cast<std::size_t>(r) * c);
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    const double* row = x.data.data() + static_cast<std::size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const int t = target_index[i];
    if (t < 0 || t >= c) throw std::invalid_argument("softmax_cross_entropy: target out of range");
    total += -(row[t] - mx - std::log(z));
    for (int j = 0; j < c; ++j)
      softmax[static_cast<std::size_t>(i) * c + j] = std::exp(row[j] - mx) / z;
  }

  const int ai = logits.idx;
  const bool tracked = nodes_[ai].tracked;
  Value ov = push(Tensor::scalar(total / r), tracked, nullptr);
  const int oi = ov.idx;
  nodes_[oi].back = [ai, oi, softmax = std::move(softmax), target_index, r, c](Tape& tape) {
    if (!tape.nodes_[ai].tracked) return;
    const double up = tape.nodes_[oi].adjoint[0];
    auto& adj = tape.adjoint_of(ai);
    const double inv = 1.0 / r;
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) {
        double g = softmax[static_cast<std::size_t>(i) * c + j];
        if (j == target_index[i]) g -= 1.0;
        adj[static_cast<std::size_t>(i) * c + j] += up * inv * g;
      }
    }
  };
  return ov;
}

double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double eps) {
  Tensor probe = x;
  probe.set_requires_grad(true);

  Tape tape;
  Value in = tape.input(probe);
  Value out = f(tape, in);
  if (tape.value(out).numel() != 1) throw std::invalid_argument("grad_check: f must be scalar");
  tape.backward(out);
  std::vector<double> g_ad = tape.grad(in);
  if (g_ad.empty()) g_ad.assign(x.numel(), 0.0);

  auto eval = [&](const Tensor& pt) {
    Tape t;
    Value v = t.input(pt);
    return t.value(f(t, v)).data[0];
  };

  double worst = 0.0;
  Tensor shifted = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = shifted.data[i];
    shifted.data[i] = orig + eps;
    const double up = eval(shifted);
    shifted.data[i] = orig - eps;
    const double down = eval(shifted);
    shifted.data[i] = orig;
    const double g_fd = (up - down) / (2.0 * eps);
    const double denom = std::max(1e-8, std::fabs(g_ad[i]) + std::fabs(g_fd));
    worst = std::max(worst, std::fabs(g_ad[i] - g_fd) / denom);
  }
  return worst;
}

}  // namespace aiwdn::ad
