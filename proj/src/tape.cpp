#include "sit/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace sit {

Vec stable_softmax(const Vec& x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(x.begin(), x.end());
  Vec y(x.size());
  double z = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    y[i] = std::exp(x[i] - m);
    z += y[i];
  }
  for (double& v : y) v /= z;
  return y;
}

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tape::Node& Tape::node(int id) { return nodes_[static_cast<size_t>(id)]; }

const Tape::Node& Tape::cnode(int id) const {
  if (id < 0 || id >= static_cast<int>(nodes_.size()))
    throw std::out_of_range("tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<size_t>(id)];
}

Vec& Tape::grad_of(int id) {
  Node& n = node(id);
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

int Tape::leaf(Vec v) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::leaf(const double* data, int count) {
  return leaf(Vec(data, data + count));
}

int Tape::leaf_scalar(double v) { return leaf(Vec{v}); }

int Tape::param(const ParamView& view) {
  if (view.value == nullptr || view.grad == nullptr)
    throw std::invalid_argument("tape param '" + view.name + "': null value/grad");
  if (view.value->size() != view.grad->size())
    throw std::invalid_argument("tape param '" + view.name + "': value/grad size mismatch");
  Node n;
  n.op = Op::kParam;
  n.value = *view.value;
  n.sink = view.grad;
  n.i0 = view.rows;
  n.i1 = view.cols;
  return push(std::move(n));
}

int Tape::affine(int w, int b, int x) {
  const Node& wn = cnode(w);
  const Node& bn = cnode(b);
  const Node& xn = cnode(x);
  const int rows = wn.i0, cols = wn.i1;
  if (rows <= 0 || cols <= 0 || static_cast<size_t>(rows) * cols != wn.value.size())
    throw std::invalid_argument("tape affine: weight node lacks matrix shape");
  if (static_cast<int>(xn.value.size()) != cols)
    throw std::invalid_argument("tape affine: input size " + std::to_string(xn.value.size()) +
                                ", expected " + std::to_string(cols));
  if (static_cast<int>(bn.value.size()) != rows)
    throw std::invalid_argument("tape affine: bias size mismatch");
  Node n;
  n.op = Op::kAffine;
  n.i0 = rows;
  n.i1 = cols;
  n.in = {w, b, x};
  n.value.assign(static_cast<size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = &wn.value[static_cast<size_t>(r) * cols];
    double s = bn.value[static_cast<size_t>(r)];
    for (int c = 0; c < cols; ++c) s += row[c] * xn.value[static_cast<size_t>(c)];
    n.value[static_cast<size_t>(r)] = s;
  }
  return push(std::move(n));
}

int Tape::matvec(int w, int x) {
  const Node& wn = cnode(w);
  const Node& xn = cnode(x);
  const int rows = wn.i0, cols = wn.i1;
  if (rows <= 0 || cols <= 0 || static_cast<size_t>(rows) * cols != wn.value.size())
    throw std::invalid_argument("tape matvec: weight node lacks matrix shape");
  if (static_cast<int>(xn.value.size()) != cols)
    throw std::invalid_argument("tape matvec: input size " + std::to_string(xn.value.size()) +
                                ", expected " + std::to_string(cols));
  Node n;
  n.op = Op::kMatVec;
  n.i0 = rows;
  n.i1 = cols;
  n.in = {w, x};
  n.value.assign(static_cast<size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    const double* row = &wn.value[static_cast<size_t>(r) * cols];
    double s = 0.0;
    for (int c = 0; c < cols; ++c) s += row[c] * xn.value[static_cast<size_t>(c)];
    n.value[static_cast<size_t>(r)] = s;
  }
  return push(std::move(n));
}

int Tape::relu(int x) {
  Node n;
  n.op = Op::kRelu;
  n.in = {x};
  n.value = cnode(x).value;
  for (double& v : n.value) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

int Tape::leaky_relu(int x, double slope) {
  Node n;
  n.op = Op::kLeakyRelu;
  n.c = slope;
  n.in = {x};
  n.value = cnode(x).value;
  for (double& v : n.value) v = v > 0.0 ? v : slope * v;
  return push(std::move(n));
}

int Tape::softmax(int x) {
  Node n;
  n.op = Op::kSoftmax;
  n.in = {x};
  n.value = stable_softmax(cnode(x).value);
  return push(std::move(n));
}

int Tape::log_softmax(int x) {
  const Vec& v = cnode(x).value;
  if (v.empty()) throw std::invalid_argument("log_softmax: empty input");
  const double m = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double e : v) z += std::exp(e - m);
  const double logz = m + std::log(z);
  Node n;
  n.op = Op::kLogSoftmax;
  n.in = {x};
  n.value.resize(v.size());
  for (size_t i = 0; i < v.size(); ++i) n.value[i] = v[i] - logz;
  return push(std::move(n));
}

int Tape::concat(std::span<const int> xs) {
  if (xs.empty()) throw std::invalid_argument("tape concat: no inputs");
  Node n;
  n.op = Op::kConcat;
  n.in.assign(xs.begin(), xs.end());
  size_t total = 0;
  for (int id : xs) total += cnode(id).value.size();
  n.value.reserve(total);
  for (int id : xs) {
    const Vec& v = cnode(id).value;
    n.value.insert(n.value.end(), v.begin(), v.end());
  }
  return push(std::move(n));
}

int Tape::dot(int u, int v) {
  const Vec& a = cnode(u).value;
  const Vec& b = cnode(v).value;
  if (a.size() != b.size()) throw std::invalid_argument("tape dot: size mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  Node n;
  n.op = Op::kDot;
  n.in = {u, v};
  n.value = {s};
  return push(std::move(n));
}

int Tape::pick(int x, int index) {
  const Vec& v = cnode(x).value;
  if (index < 0 || index >= static_cast<int>(v.size()))
    throw std::invalid_argument("tape pick: index out of range");
  Node n;
  n.op = Op::kPick;
  n.i0 = index;
  n.in = {x};
  n.value = {v[static_cast<size_t>(index)]};
  return push(std::move(n));
}

int Tape::add(int u, int v) {
  const Vec& a = cnode(u).value;
  const Vec& b = cnode(v).value;
  if (a.size() != b.size()) throw std::invalid_argument("tape add: size mismatch");
  Node n;
  n.op = Op::kAdd;
  n.in = {u, v};
  n.value = a;
  for (size_t i = 0; i < b.size(); ++i) n.value[i] += b[i];
  return push(std::move(n));
}

int Tape::sub(int u, int v) {
  const Vec& a = cnode(u).value;
  const Vec& b = cnode(v).value;
  if (a.size() != b.size()) throw std::invalid_argument("tape sub: size mismatch");
  Node n;
  n.op = Op::kSub;
  n.in = {u, v};
  n.value = a;
  for (size_t i = 0; i < b.size(); ++i) n.value[i] -= b[i];
  return push(std::move(n));
}

int Tape::scale(int x, double c) {
  Node n;
  n.op = Op::kScale;
  n.c = c;
  n.in = {x};
  n.value = cnode(x).value;
  for (double& v : n.value) v *= c;
  return push(std::move(n));
}

int Tape::add_const(int x, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.c = c;
  n.in = {x};
  n.value = cnode(x).value;
  for (double& v : n.value) v += c;
  return push(std::move(n));
}

int Tape::square(int x) {
  Node n;
  n.op = Op::kSquare;
  n.in = {x};
  n.value = cnode(x).value;
  for (double& v : n.value) v *= v;
  return push(std::move(n));
}

int Tape::mean_all(int x) {
  const Vec& v = cnode(x).value;
  if (v.empty()) throw std::invalid_argument("tape mean_all: empty input");
  double s = 0.0;
  for (double e : v) s += e;
  Node n;
  n.op = Op::kMeanAll;
  n.in = {x};
  n.value = {s / static_cast<double>(v.size())};
  return push(std::move(n));
}

int Tape::weighted_sum(int weights, std::span<const int> vectors) {
  const Vec& w = cnode(weights).value;
  if (w.size() != vectors.size())
    throw std::invalid_argument("tape weighted_sum: weight count " + std::to_string(w.size()) +
                                " != vector count " + std::to_string(vectors.size()));
  if (vectors.empty()) throw std::invalid_argument("tape weighted_sum: no vectors");
  const size_t dim = cnode(vectors[0]).value.size();
  Node n;
  n.op = Op::kWeightedSum;
  n.in.reserve(vectors.size() + 1);
  n.in.push_back(weights);
  n.value.assign(dim, 0.0);
  for (size_t j = 0; j < vectors.size(); ++j) {
    const Vec& vj = cnode(vectors[j]).value;
    if (vj.size() != dim) throw std::invalid_argument("tape weighted_sum: vector dim mismatch");
    n.in.push_back(vectors[j]);
    for (size_t i = 0; i < dim; ++i) n.value[i] += w[j] * vj[i];
  }
  return push(std::move(n));
}

const Vec& Tape::value(int id) const { return cnode(id).value; }

double Tape::scalar(int id) const {
  const Vec& v = cnode(id).value;
  if (v.size() != 1) throw std::logic_error("tape scalar: node is not scalar");
  return v[0];
}

void Tape::reset() { nodes_.clear(); }

void Tape::backward(int loss) {
  if (nodes_.empty()) throw std::logic_error("tape backward: no recorded forward pass");
  const Node& ln = cnode(loss);
  if (ln.value.size() != 1) throw std::logic_error("tape backward: loss node must be scalar");
  grad_of(loss)[0] = 1.0;

  for (int id = loss; id >= 0; --id) {
    Node& n = node(id);
    if (n.grad.empty()) continue;  // not on any path to the loss
    const Vec& g = n.grad;
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kParam:
        for (size_t i = 0; i < g.size(); ++i) (*n.sink)[i] += g[i];
        break;
      case Op::kAffine: {
        const int rows = n.i0, cols = n.i1;
        Vec& gw = grad_of(n.in[0]);
        Vec& gb = grad_of(n.in[1]);
        Vec& gx = grad_of(n.in[2]);
        const Vec& wv = cnode(n.in[0]).value;
        const Vec& xv = cnode(n.in[2]).value;
        for (int r = 0; r < rows; ++r) {
          const double gr = g[static_cast<size_t>(r)];
          if (gr == 0.0) continue;
          gb[static_cast<size_t>(r)] += gr;
          double* gwrow = &gw[static_cast<size_t>(r) * cols];
          const double* wrow = &wv[static_cast<size_t>(r) * cols];
          for (int c = 0; c < cols; ++c) {
            gwrow[c] += gr * xv[static_cast<size_t>(c)];
            gx[static_cast<size_t>(c)] += gr * wrow[c];
          }
        }
        break;
      }
      case Op::kMatVec: {
        const int rows = n.i0, cols = n.i1;
        Vec& gw = grad_of(n.in[0]);
        Vec& gx = grad_of(n.in[1]);
        const Vec& wv = cnode(n.in[0]).value;
        const Vec& xv = cnode(n.in[1]).value;
        for (int r = 0; r < rows; ++r) {
          const double gr = g[static_cast<size_t>(r)];
          if (gr == 0.0) continue;
          double* gwrow = &gw[static_cast<size_t>(r) * cols];
          const double* wrow = &wv[static_cast<size_t>(r) * cols];
          for (int c = 0; c < cols; ++c) {
            gwrow[c] += gr * xv[static_cast<size_t>(c)];
            gx[static_cast<size_t>(c)] += gr * wrow[c];
          }
        }
        break;
      }
      case Op::kRelu: {
        Vec& gx = grad_of(n.in[0]);
        const Vec& xv = cnode(n.in[0]).value;
        for (size_t i = 0; i < g.size(); ++i)
          if (xv[i] > 0.0) gx[i] += g[i];
        break;
      }
      case Op::kLeakyRelu: {
        Vec& gx = grad_of(n.in[0]);
        const Vec& xv = cnode(n.in[0]).value;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (xv[i] > 0.0 ? 1.0 : n.c);
        break;
      }
      case Op::kSoftmax: {
        Vec& gx = grad_of(n.in[0]);
        double dot_gy = 0.0;
        for (size_t i = 0; i < g.size(); ++i) dot_gy += g[i] * n.value[i];
        for (size_t i = 0; i < g.size(); ++i) gx[i] += n.value[i] * (g[i] - dot_gy);
        break;
      }
      case Op::kLogSoftmax: {
        Vec& gx = grad_of(n.in[0]);
        double gsum = 0.0;
        for (double e : g) gsum += e;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] - std::exp(n.value[i]) * gsum;
        break;
      }
      case Op::kConcat: {
        size_t off = 0;
        for (int child : n.in) {
          Vec& gc = grad_of(child);
          for (size_t i = 0; i < gc.size(); ++i) gc[i] += g[off + i];
          off += gc.size();
        }
        break;
      }
      case Op::kDot: {
        Vec& gu = grad_of(n.in[0]);
        Vec& gv = grad_of(n.in[1]);
        const Vec& uv = cnode(n.in[0]).value;
        const Vec& vv = cnode(n.in[1]).value;
        const double gs = g[0];
        for (size_t i = 0; i < uv.size(); ++i) {
          gu[i] += gs * vv[i];
          gv[i] += gs * uv[i];
        }
        break;
      }
      case Op::kPick:
        grad_of(n.in[0])[static_cast<size_t>(n.i0)] += g[0];
        break;
      case Op::kAdd: {
        Vec& gu = grad_of(n.in[0]);
        Vec& gv = grad_of(n.in[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          gu[i] += g[i];
          gv[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Vec& gu = grad_of(n.in[0]);
        Vec& gv = grad_of(n.in[1]);
        for (size_t i = 0; i < g.size(); ++i) {
          gu[i] += g[i];
          gv[i] -= g[i];
        }
        break;
      }
      case Op::kScale: {
        Vec& gx = grad_of(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += n.c * g[i];
        break;
      }
      case Op::kAddConst: {
        Vec& gx = grad_of(n.in[0]);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        break;
      }
      case Op::kSquare: {
        Vec& gx = grad_of(n.in[0]);
        const Vec& xv = cnode(n.in[0]).value;
        for (size_t i = 0; i < g.size(); ++i) gx[i] += 2.0 * xv[i] * g[i];
        break;
      }
      case Op::kMeanAll: {
        Vec& gx = grad_of(n.in[0]);
        const double gs = g[0] / static_cast<double>(gx.size());
        for (double& e : gx) e += gs;
        break;
      }
      case Op::kWeightedSum: {
        Vec& gw = grad_of(n.in[0]);
        const Vec& wv = cnode(n.in[0]).value;
        for (size_t j = 0; j + 1 < n.in.size(); ++j) {
          const int child = n.in[j + 1];
          Vec& gv = grad_of(child);
          const Vec& vv = cnode(child).value;
          double s = 0.0;
          for (size_t i = 0; i < g.size(); ++i) {
            s += g[i] * vv[i];
            gv[i] += wv[j] * g[i];
          }
          gw[j] += s;
        }
        break;
      }
    }
  }
}

}  // namespace sit
