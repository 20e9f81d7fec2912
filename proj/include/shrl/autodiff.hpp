#pragma once

// Minimal reverse-mode automatic differentiation over row-major matrices.
// A Graph records every operation; backward() replays the records in reverse.
// Vectors are 1 x n matrices, and most ops accept a 1 x c right operand that
// is broadcast over the rows of an n x c left operand.

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "shrl/kernels.hpp"

namespace shrl::nn {

class ShapeError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Parameter {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
};

/// Named parameters in creation order. Addresses are stable.
class ParamStore {
 public:
  Parameter &add(const std::string &name, int rows, int cols);
  Parameter *find(const std::string &name);
  const Parameter *find(const std::string &name) const;
  const std::vector<std::unique_ptr<Parameter>> &all() const { return params_; }
  std::size_t count() const;  // total scalar count
  void zeroGrad();
  /// Bumped by every optimizer step.
  std::uint64_t version() const { return version_; }
  void bumpVersion() { ++version_; }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, Parameter *> byName_;
  std::uint64_t version_ = 0;
};

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph *g = nullptr;
  int id = -1;

  int rows() const;
  int cols() const;
  const std::vector<double> &value() const;
  double at(int r, int c) const;
  double scalar() const;
};

class Graph {
 public:
  explicit Graph(bool trackGrad = true, kernels::Exec exec = kernels::Exec::Serial)
      : track_(trackGrad), exec_(exec) {}

  Var constant(int rows, int cols, std::vector<double> values);
  Var constant(const std::vector<double> &row) { return constant(1, static_cast<int>(row.size()), row); }
  /// Leaf bound to a parameter; its gradient is accumulated into param.grad.
  Var param(Parameter &p);

  /// d(loss)/d(every node); loss must be 1 x 1.
  void backward(Var loss);
  const std::vector<double> &grad(Var v) const { return nodes_[v.id].grad; }

  bool tracking() const { return track_; }
  kernels::Exec exec() const { return exec_; }

  // Internal interface used by the op implementations.
  struct Node {
    int rows = 0;
    int cols = 0;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Graph &, int)> back;
    Parameter *param = nullptr;
  };
  Var make(int rows, int cols, std::vector<double> value, std::function<void(Graph &, int)> back);
  Node &node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node &node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  std::vector<double> &gradOf(int id);
  /// Parameter nodes read the parameter's storage directly, so a graph must
  /// not be used across an optimizer step.
  const std::vector<double> &valueOf(int id) const {
    const Node &n = node(id);
    return n.param ? n.param->value : n.value;
  }

 private:
  bool track_;
  kernels::Exec exec_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter *, int> paramNodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);  // b same shape or 1 x cols
Var sub(Var a, Var b);  // b same shape or 1 x cols
Var mul(Var a, Var b);  // elementwise; b same shape or 1 x cols
Var scale(Var a, double s);
Var addScalar(Var a, double s);
Var neg(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var minimum(Var a, Var b);
/// Clamp with zero gradient outside [lo, hi].
Var clamp(Var a, double lo, double hi);
Var softmaxRows(Var a);
Var layerNormRows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var concatCols(const std::vector<Var> &parts);
Var concatRows(const std::vector<Var> &parts);
Var sliceCols(Var a, int start, int count);
Var sliceRows(Var a, int start, int count);
Var tileRows(Var a, int n);
/// Row i of the result is row idx[i] of a.
Var gatherRows(Var a, const std::vector<int> &idx);
Var transpose(Var a);
Var sum(Var a);
Var mean(Var a);
Var rowSum(Var a);  // n x 1
/// Row i of the result is columns [block[i] * width, (block[i] + 1) * width) of row i of a.
Var selectBlocks(Var a, const std::vector<int> &block, int width);
/// Row i of the result is [a_i / d_i0, a_i / d_i1, ..., a_i / d_i(k-1)]; d is
/// n x k, given row-major.
Var copyDivide(Var a, const std::vector<double> &divisors, int k);

}  // namespace shrl::nn
