#include "shrl/autodiff.hpp"

#include <cmath>

namespace shrl::nn {

Parameter &ParamStore::add(const std::string &name, int rows, int cols) {
  if (byName_.count(name)) throw ShapeError("duplicate parameter " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->rows = rows;
  p->cols = cols;
  p->value.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  p->grad.assign(p->value.size(), 0.0);
  byName_[name] = p.get();
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter *ParamStore::find(const std::string &name) {
  const auto it = byName_.find(name);
  return it == byName_.end() ? nullptr : it->second;
}

const Parameter *ParamStore::find(const std::string &name) const {
  const auto it = byName_.find(name);
  return it == byName_.end() ? nullptr : it->second;
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto &p : params_) n += p->size();
  return n;
}

void ParamStore::zeroGrad() {
  for (auto &p : params_) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

int Var::rows() const { return g->node(id).rows; }
int Var::cols() const { return g->node(id).cols; }
const std::vector<double> &Var::value() const { return g->valueOf(id); }
double Var::at(int r, int c) const { return value()[static_cast<std::size_t>(r) * cols() + c]; }
double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw ShapeError("scalar() on a non 1x1 value");
  return value()[0];
}

Var Graph::make(int rows, int cols, std::vector<double> value, std::function<void(Graph &, int)> back) {
  Node n;
  n.rows = rows;
  n.cols = cols;
  n.value = std::move(value);
  if (track_) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::constant(int rows, int cols, std::vector<double> values) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) throw ShapeError("constant: size mismatch");
  return make(rows, cols, std::move(values), nullptr);
}

Var Graph::param(Parameter &p) {
  if (auto it = paramNodes_.find(&p); it != paramNodes_.end()) return {this, it->second};
  Var v = make(p.rows, p.cols, {}, nullptr);
  nodes_.back().param = &p;
  paramNodes_[&p] = v.id;
  return v;
}

std::vector<double> &Graph::gradOf(int id) {
  Node &n = node(id);
  if (n.grad.empty()) n.grad.assign(valueOf(id).size(), 0.0);
  return n.grad;
}

void Graph::backward(Var loss) {
  if (!track_) throw ShapeError("backward on a graph without gradient tracking");
  if (loss.rows() != 1 || loss.cols() != 1) throw ShapeError("backward: loss must be 1x1");
  for (auto &n : nodes_) n.grad.clear();
  gradOf(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node &n = node(id);
    if (n.grad.empty()) continue;
    if (n.back) n.back(*this, id);
    if (n.param) {
      for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
    }
  }
}

namespace {

void requireSame(Var a, Var b, const char *op) {
  if (a.g != b.g) throw ShapeError(std::string(op) + ": operands from different graphs");
  if (a.rows() == b.rows() && a.cols() == b.cols()) return;
  if (b.rows() == 1 && a.cols() == b.cols()) return;
  throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

// Elementwise binary op with row broadcast of b. f(x, y) -> value,
// dfdx/dfdy given (x, y, out).
template <typename F, typename Dx, typename Dy>
Var binary(Var a, Var b, const char *name, F f, Dx dx, Dy dy) {
  requireSame(a, b, name);
  const int rows = a.rows(), cols = a.cols();
  const bool bcast = b.rows() != rows;
  const auto &av = a.value();
  const auto &bv = b.value();
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * cols + c;
      out[i] = f(av[i], bv[bcast ? c : i]);
    }
  const int ia = a.id, ib = b.id;
  return a.g->make(rows, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    const auto &x = g.valueOf(ia);
    const auto &y = g.valueOf(ib);
    const auto &o = g.valueOf(self);
    auto &gx = g.gradOf(ia);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const std::size_t j = bcast ? i % cols : i;
      gx[i] += go[i] * dx(x[i], y[j], o[i]);
    }
    auto &gy = g.gradOf(ib);
    for (std::size_t i = 0; i < go.size(); ++i) {
      const std::size_t j = bcast ? i % cols : i;
      gy[j] += go[i] * dy(x[i], y[j], o[i]);
    }
  });
}

template <typename F, typename D>
Var unary(Var a, F f, D d) {
  const auto &av = a.value();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const int ia = a.id;
  return a.g->make(a.rows(), a.cols(), std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    const auto &x = g.valueOf(ia);
    const auto &o = g.valueOf(self);
    auto &gx = g.gradOf(ia);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * d(x[i], o[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  std::vector<double> out(static_cast<std::size_t>(n) * m);
  kernels::matmul(a.value().data(), b.value().data(), out.data(), n, k, m, a.g->exec());
  const int ia = a.id, ib = b.id;
  return a.g->make(n, m, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    const auto &av = g.valueOf(ia);
    const auto &bv = g.valueOf(ib);
    auto &ga = g.gradOf(ia);
    // ga += go * b^T, as row updates over a transposed copy of b.
    std::vector<double> bt(static_cast<std::size_t>(k) * m);
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < m; ++j) bt[static_cast<std::size_t>(j) * k + p] = bv[static_cast<std::size_t>(p) * m + j];
    for (int i = 0; i < n; ++i) {
      double *gai = ga.data() + static_cast<std::size_t>(i) * k;
      for (int j = 0; j < m; ++j) {
        const double x = go[static_cast<std::size_t>(i) * m + j];
        if (x == 0.0) continue;
        const double *btj = bt.data() + static_cast<std::size_t>(j) * k;
        for (int p = 0; p < k; ++p) gai[p] += x * btj[p];
      }
    }
    auto &gb = g.gradOf(ib);
    for (int i = 0; i < n; ++i)
      for (int p = 0; p < k; ++p) {
        const double x = av[static_cast<std::size_t>(i) * k + p];
        if (x == 0.0) continue;
        for (int j = 0; j < m; ++j) gb[static_cast<std::size_t>(p) * m + j] += x * go[static_cast<std::size_t>(i) * m + j];
      }
  });
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var minimum(Var a, Var b) {
  return binary(
      a, b, "minimum", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double) { return x <= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x <= y ? 0.0 : 1.0; });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var addScalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double o) { return 1.0 - o * o; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
      [](double, double o) { return o * (1.0 - o); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double o) { return o; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var clamp(Var a, double lo, double hi) {
  return unary(
      a, [=](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [=](double x, double) { return (x < lo || x > hi) ? 0.0 : 1.0; });
}

Var softmaxRows(Var a) {
  const int rows = a.rows(), cols = a.cols();
  const auto &av = a.value();
  std::vector<double> out(av.size());
  for (int r = 0; r < rows; ++r) {
    const double *x = av.data() + static_cast<std::size_t>(r) * cols;
    double *o = out.data() + static_cast<std::size_t>(r) * cols;
    double mx = -INFINITY;
    for (int c = 0; c < cols; ++c) mx = std::max(mx, x[c]);
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += (o[c] = std::exp(x[c] - mx));
    for (int c = 0; c < cols; ++c) o[c] /= s;
  }
  const int ia = a.id;
  return a.g->make(rows, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    const auto &o = g.valueOf(self);
    auto &gx = g.gradOf(ia);
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      double dotp = 0.0;
      for (int c = 0; c < cols; ++c) dotp += go[base + c] * o[base + c];
      for (int c = 0; c < cols; ++c) gx[base + c] += o[base + c] * (go[base + c] - dotp);
    }
  });
}

Var layerNormRows(Var x, Var gamma, Var beta, double eps) {
  const int rows = x.rows(), cols = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols)
    throw ShapeError("layerNorm: gamma/beta must be 1 x cols");
  const auto &xv = x.value();
  std::vector<double> xhat(xv.size()), inv(static_cast<std::size_t>(rows)), out(xv.size());
  for (int r = 0; r < rows; ++r) {
    const std::size_t base = static_cast<std::size_t>(r) * cols;
    double mu = 0.0;
    for (int c = 0; c < cols; ++c) mu += xv[base + c];
    mu /= cols;
    double var = 0.0;
    for (int c = 0; c < cols; ++c) var += (xv[base + c] - mu) * (xv[base + c] - mu);
    var /= cols;
    inv[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < cols; ++c) {
      xhat[base + c] = (xv[base + c] - mu) * inv[static_cast<std::size_t>(r)];
      out[base + c] = xhat[base + c] * gamma.value()[static_cast<std::size_t>(c)] + beta.value()[static_cast<std::size_t>(c)];
    }
  }
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.g->make(rows, cols, std::move(out), [=, xhat = std::move(xhat), inv = std::move(inv)](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    const auto &gv = g.valueOf(ig);
    auto &gx = g.gradOf(ix);
    auto &gg = g.gradOf(ig);
    auto &gb = g.gradOf(ib);
    for (int r = 0; r < rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r) * cols;
      double sumD = 0.0, sumDX = 0.0;
      for (int c = 0; c < cols; ++c) {
        const double d = go[base + c] * gv[static_cast<std::size_t>(c)];
        sumD += d;
        sumDX += d * xhat[base + c];
        gg[static_cast<std::size_t>(c)] += go[base + c] * xhat[base + c];
        gb[static_cast<std::size_t>(c)] += go[base + c];
      }
      for (int c = 0; c < cols; ++c) {
        const double d = go[base + c] * gv[static_cast<std::size_t>(c)];
        gx[base + c] += inv[static_cast<std::size_t>(r)] / cols * (cols * d - sumD - xhat[base + c] * sumDX);
      }
    }
  });
}

Var concatCols(const std::vector<Var> &parts) {
  if (parts.empty()) throw ShapeError("concatCols: no parts");
  const int rows = parts[0].rows();
  int cols = 0;
  for (const auto &p : parts) {
    if (p.rows() != rows) throw ShapeError("concatCols: row counts differ");
    cols += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  std::vector<int> ids, offsets;
  int offset = 0;
  for (const auto &p : parts) {
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < p.cols(); ++c) out[static_cast<std::size_t>(r) * cols + offset + c] = p.at(r, c);
    ids.push_back(p.id);
    offsets.push_back(offset);
    offset += p.cols();
  }
  return parts[0].g->make(rows, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const int pc = g.node(ids[k]).cols;
      auto &gp = g.gradOf(ids[k]);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < pc; ++c)
          gp[static_cast<std::size_t>(r) * pc + c] += go[static_cast<std::size_t>(r) * cols + offsets[k] + c];
    }
  });
}

Var concatRows(const std::vector<Var> &parts) {
  if (parts.empty()) throw ShapeError("concatRows: no parts");
  const int cols = parts[0].cols();
  int rows = 0;
  std::vector<double> out;
  std::vector<int> ids;
  for (const auto &p : parts) {
    if (p.cols() != cols) throw ShapeError("concatRows: column counts differ");
    rows += p.rows();
    out.insert(out.end(), p.value().begin(), p.value().end());
    ids.push_back(p.id);
  }
  return parts[0].g->make(rows, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    std::size_t offset = 0;
    for (int id : ids) {
      auto &gp = g.gradOf(id);
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += go[offset + i];
      offset += gp.size();
    }
  });
}

Var sliceCols(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeError("sliceCols: out of range");
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(static_cast<std::size_t>(rows) * count);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < count; ++c) out[static_cast<std::size_t>(r) * count + c] = a.at(r, start + c);
  const int ia = a.id;
  return a.g->make(rows, count, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < count; ++c)
        ga[static_cast<std::size_t>(r) * cols + start + c] += go[static_cast<std::size_t>(r) * count + c];
  });
}

Var sliceRows(Var a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("sliceRows: out of range");
  const int cols = a.cols();
  const auto first = a.value().begin() + static_cast<std::ptrdiff_t>(start) * cols;
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(count) * cols);
  const int ia = a.id;
  return a.g->make(count, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[static_cast<std::size_t>(start) * cols + i] += go[i];
  });
}

Var tileRows(Var a, int n) {
  if (a.rows() != 1) throw ShapeError("tileRows: expects a single row");
  const int cols = a.cols();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n) * cols);
  for (int r = 0; r < n; ++r) out.insert(out.end(), a.value().begin(), a.value().end());
  const int ia = a.id;
  return a.g->make(n, cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (std::size_t i = 0; i < go.size(); ++i) ga[i % static_cast<std::size_t>(cols)] += go[i];
  });
}

Var gatherRows(Var a, const std::vector<int> &idx) {
  const int cols = a.cols();
  std::vector<double> out;
  out.reserve(idx.size() * static_cast<std::size_t>(cols));
  for (int r : idx) {
    if (r < 0 || r >= a.rows()) throw ShapeError("gatherRows: index out of range");
    const auto first = a.value().begin() + static_cast<std::ptrdiff_t>(r) * cols;
    out.insert(out.end(), first, first + cols);
  }
  const int ia = a.id;
  return a.g->make(static_cast<int>(idx.size()), cols, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int c = 0; c < cols; ++c)
        ga[static_cast<std::size_t>(idx[i]) * cols + c] += go[i * static_cast<std::size_t>(cols) + c];
  });
}

Var transpose(Var a) {
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(a.value().size());
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(c) * rows + r] = a.at(r, c);
  const int ia = a.id;
  return a.g->make(cols, rows, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) ga[static_cast<std::size_t>(r) * cols + c] += go[static_cast<std::size_t>(c) * rows + r];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  const int ia = a.id;
  return a.g->make(1, 1, {s}, [=](Graph &g, int self) {
    const double go = g.node(self).grad[0];
    for (auto &x : g.gradOf(ia)) x += go;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var rowSum(Var a) {
  const int rows = a.rows(), cols = a.cols();
  std::vector<double> out(static_cast<std::size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out[static_cast<std::size_t>(r)] += a.at(r, c);
  const int ia = a.id;
  return a.g->make(rows, 1, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) ga[static_cast<std::size_t>(r) * cols + c] += go[static_cast<std::size_t>(r)];
  });
}

Var selectBlocks(Var a, const std::vector<int> &block, int width) {
  const int rows = a.rows(), cols = a.cols();
  if (static_cast<int>(block.size()) != rows) throw ShapeError("selectBlocks: one block index per row");
  std::vector<double> out(static_cast<std::size_t>(rows) * width);
  for (int r = 0; r < rows; ++r) {
    const int b = block[static_cast<std::size_t>(r)];
    if (b < 0 || (b + 1) * width > cols) throw ShapeError("selectBlocks: block out of range");
    for (int c = 0; c < width; ++c) out[static_cast<std::size_t>(r) * width + c] = a.at(r, b * width + c);
  }
  const int ia = a.id;
  return a.g->make(rows, width, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (int r = 0; r < rows; ++r) {
      const int b = block[static_cast<std::size_t>(r)];
      for (int c = 0; c < width; ++c)
        ga[static_cast<std::size_t>(r) * cols + b * width + c] += go[static_cast<std::size_t>(r) * width + c];
    }
  });
}

Var copyDivide(Var a, const std::vector<double> &divisors, int k) {
  const int rows = a.rows(), d = a.cols();
  if (divisors.size() != static_cast<std::size_t>(rows) * k) throw ShapeError("copyDivide: divisor shape");
  std::vector<double> out(static_cast<std::size_t>(rows) * k * d);
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < k; ++j) {
      const double div = divisors[static_cast<std::size_t>(r) * k + j];
      for (int c = 0; c < d; ++c) out[(static_cast<std::size_t>(r) * k + j) * d + c] = a.at(r, c) / div;
    }
  const int ia = a.id;
  return a.g->make(rows, k * d, std::move(out), [=](Graph &g, int self) {
    const auto &go = g.node(self).grad;
    auto &ga = g.gradOf(ia);
    for (int r = 0; r < rows; ++r)
      for (int j = 0; j < k; ++j) {
        const double div = divisors[static_cast<std::size_t>(r) * k + j];
        for (int c = 0; c < d; ++c) ga[static_cast<std::size_t>(r) * d + c] += go[(static_cast<std::size_t>(r) * k + j) * d + c] / div;
      }
  });
}

}  // namespace shrl::nn
