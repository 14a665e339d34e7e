#include "mmcap/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace mmcap {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

namespace {

int shape_numel(const Shape& s) {
  int n = 1;
  for (int e : s) {
    if (e <= 0) throw DimensionError("non-positive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

[[noreturn]] void dim_error(const std::string& what, const Shape& a, const Shape& b) {
  throw DimensionError(what + ": " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape_numel(shape) != static_cast<int>(data.size()))
    throw DimensionError("shape " + shape_str(shape) + " does not match data length " +
                         std::to_string(data.size()));
}

Tensor Tensor::zeros(const Shape& s) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
}

Tensor Tensor::full(const Shape& s, double v) {
  return Tensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vec(std::vector<double> d) {
  int n = static_cast<int>(d.size());
  return Tensor({n}, std::move(d));
}

Tensor Tensor::mat(int rows, int cols, std::vector<double> d) {
  return Tensor({rows, cols}, std::move(d));
}

Tensor Tensor::identity(int n) {
  Tensor t = zeros({n, n});
  for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

int Tensor::numel() const { return static_cast<int>(data.size()); }

int Tensor::rows() const {
  if (shape.size() != 2) throw DimensionError("rows() on non-matrix " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  if (shape.size() != 2) throw DimensionError("cols() on non-matrix " + shape_str(shape));
  return shape[1];
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Graph

void Graph::check_id(Value v) const {
  if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
    throw ContractError("value handle does not belong to this graph");
}

bool Graph::any_needs_grad(const std::vector<int>& ids) const {
  for (int id : ids)
    if (nodes_[static_cast<size_t>(id)].needs_grad) return true;
  return false;
}

Value Graph::make(const char* op, Tensor out, std::vector<int> inputs,
                  std::function<void(Graph&, int)> back) {
  Node n;
  n.op = op;
  n.needs_grad = any_needs_grad(inputs);
  n.inputs = std::move(inputs);
  n.value = std::move(out);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Graph::input(Tensor t) {
  Node n;
  n.op = "input";
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Graph::param(Param& p) {
  Node n;
  n.op = "param";
  n.value = p.value;
  n.needs_grad = true;
  n.bound = &p;
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::value(Value v) const {
  check_id(v);
  return nodes_[static_cast<size_t>(v.id)].value;
}

const Tensor& Graph::grad(Value v) const {
  check_id(v);
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  if (n.grad.data.empty()) throw ContractError("gradient not computed for this node");
  return n.grad;
}

Value Graph::affine(Value xv, Value wv, Value bv) {
  check_id(xv), check_id(wv), check_id(bv);
  const Tensor& x = val(xv.id);
  const Tensor& w = val(wv.id);
  const Tensor& b = val(bv.id);
  if (w.shape.size() != 2 || x.shape.size() != 1 || b.shape.size() != 1 ||
      w.cols() != x.numel() || w.rows() != b.numel())
    dim_error("affine: W " + shape_str(w.shape) + " incompatible with x/b", x.shape, b.shape);
  int m = w.rows(), n = w.cols();
  Tensor y = Tensor::zeros({m});
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += w.at(j, k) * x.at(k);
    y.at(j) = acc + b.at(j);
  }
  int xi = xv.id, wi = wv.id, bi = bv.id;
  return make("affine", std::move(y), {xi, wi, bi}, [xi, wi, bi, m, n](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    const Tensor& w = g.val(wi);
    const Tensor& x = g.val(xi);
    if (g.nodes_[xi].needs_grad) {
      Tensor& gx = g.grd(xi);
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < n; ++k) gx.at(k) += w.at(j, k) * gy.at(j);
    }
    if (g.nodes_[wi].needs_grad) {
      Tensor& gw = g.grd(wi);
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < n; ++k) gw.at(j, k) += gy.at(j) * x.at(k);
    }
    if (g.nodes_[bi].needs_grad) {
      Tensor& gb = g.grd(bi);
      for (int j = 0; j < m; ++j) gb.at(j) += gy.at(j);
    }
  });
}

Value Graph::matvec(Value wv, Value xv) {
  check_id(wv), check_id(xv);
  const Tensor& w = val(wv.id);
  const Tensor& x = val(xv.id);
  if (w.shape.size() != 2 || x.shape.size() != 1 || w.cols() != x.numel())
    dim_error("matvec", w.shape, x.shape);
  int m = w.rows(), n = w.cols();
  Tensor y = Tensor::zeros({m});
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += w.at(j, k) * x.at(k);
    y.at(j) = acc;
  }
  int wi = wv.id, xi = xv.id;
  return make("matvec", std::move(y), {wi, xi}, [wi, xi, m, n](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    const Tensor& w = g.val(wi);
    const Tensor& x = g.val(xi);
    if (g.nodes_[wi].needs_grad) {
      Tensor& gw = g.grd(wi);
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < n; ++k) gw.at(j, k) += gy.at(j) * x.at(k);
    }
    if (g.nodes_[xi].needs_grad) {
      Tensor& gx = g.grd(xi);
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < n; ++k) gx.at(k) += w.at(j, k) * gy.at(j);
    }
  });
}

// y[j] = sum_k Wx[j,k] x[k] + sum_k Wh[j,k] h[k] + b[j], summed in exactly
// this order so that a fused gate block is bit-identical to per-gate affines
// computed from its row slices.
Value Graph::dual_affine(Value xv, Value wxv, Value hv, Value whv, Value bv) {
  check_id(xv), check_id(wxv), check_id(hv), check_id(whv), check_id(bv);
  const Tensor& x = val(xv.id);
  const Tensor& wx = val(wxv.id);
  const Tensor& h = val(hv.id);
  const Tensor& wh = val(whv.id);
  const Tensor& b = val(bv.id);
  if (wx.shape.size() != 2 || wh.shape.size() != 2 || wx.cols() != x.numel() ||
      wh.cols() != h.numel() || wx.rows() != wh.rows() || wx.rows() != b.numel())
    dim_error("dual_affine", wx.shape, wh.shape);
  int m = wx.rows(), n = wx.cols(), q = wh.cols();
  Tensor y = Tensor::zeros({m});
  for (int j = 0; j < m; ++j) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) acc += wx.at(j, k) * x.at(k);
    for (int k = 0; k < q; ++k) acc += wh.at(j, k) * h.at(k);
    y.at(j) = acc + b.at(j);
  }
  int xi = xv.id, wxi = wxv.id, hi = hv.id, whi = whv.id, bi = bv.id;
  return make("dual_affine", std::move(y), {xi, wxi, hi, whi, bi},
              [xi, wxi, hi, whi, bi, m, n, q](Graph& g, int self) {
                const Tensor& gy = g.grd(self);
                const Tensor& wx = g.val(wxi);
                const Tensor& wh = g.val(whi);
                const Tensor& x = g.val(xi);
                const Tensor& h = g.val(hi);
                if (g.nodes_[xi].needs_grad) {
                  Tensor& gx = g.grd(xi);
                  for (int j = 0; j < m; ++j)
                    for (int k = 0; k < n; ++k) gx.at(k) += wx.at(j, k) * gy.at(j);
                }
                if (g.nodes_[wxi].needs_grad) {
                  Tensor& gw = g.grd(wxi);
                  for (int j = 0; j < m; ++j)
                    for (int k = 0; k < n; ++k) gw.at(j, k) += gy.at(j) * x.at(k);
                }
                if (g.nodes_[hi].needs_grad) {
                  Tensor& gh = g.grd(hi);
                  for (int j = 0; j < m; ++j)
                    for (int k = 0; k < q; ++k) gh.at(k) += wh.at(j, k) * gy.at(j);
                }
                if (g.nodes_[whi].needs_grad) {
                  Tensor& gw = g.grd(whi);
                  for (int j = 0; j < m; ++j)
                    for (int k = 0; k < q; ++k) gw.at(j, k) += gy.at(j) * h.at(k);
                }
                if (g.nodes_[bi].needs_grad) {
                  Tensor& gb = g.grd(bi);
                  for (int j = 0; j < m; ++j) gb.at(j) += gy.at(j);
                }
              });
}

Value Graph::add(Value av, Value bv) {
  check_id(av), check_id(bv);
  const Tensor& a = val(av.id);
  const Tensor& b = val(bv.id);
  if (!a.same_shape(b)) dim_error("add", a.shape, b.shape);
  Tensor y = a;
  for (int i = 0; i < y.numel(); ++i) y.at(i) += b.at(i);
  int ai = av.id, bi = bv.id;
  return make("add", std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    if (g.nodes_[ai].needs_grad) {
      Tensor& ga = g.grd(ai);
      for (int i = 0; i < gy.numel(); ++i) ga.at(i) += gy.at(i);
    }
    if (g.nodes_[bi].needs_grad) {
      Tensor& gb = g.grd(bi);
      for (int i = 0; i < gy.numel(); ++i) gb.at(i) += gy.at(i);
    }
  });
}

Value Graph::mul(Value av, Value bv) {
  check_id(av), check_id(bv);
  const Tensor& a = val(av.id);
  const Tensor& b = val(bv.id);
  if (!a.same_shape(b)) dim_error("mul", a.shape, b.shape);
  Tensor y = a;
  for (int i = 0; i < y.numel(); ++i) y.at(i) *= b.at(i);
  int ai = av.id, bi = bv.id;
  return make("mul", std::move(y), {ai, bi}, [ai, bi](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    const Tensor& a = g.val(ai);
    const Tensor& b = g.val(bi);
    if (g.nodes_[ai].needs_grad) {
      Tensor& ga = g.grd(ai);
      for (int i = 0; i < gy.numel(); ++i) ga.at(i) += b.at(i) * gy.at(i);
    }
    if (g.nodes_[bi].needs_grad) {
      Tensor& gb = g.grd(bi);
      for (int i = 0; i < gy.numel(); ++i) gb.at(i) += a.at(i) * gy.at(i);
    }
  });
}

Value Graph::tanh(Value xv) {
  check_id(xv);
  Tensor y = val(xv.id);
  for (int i = 0; i < y.numel(); ++i) y.at(i) = std::tanh(y.at(i));
  int xi = xv.id;
  return make("tanh", std::move(y), {xi}, [xi](Graph& g, int self) {
    if (!g.nodes_[xi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    const Tensor& y = g.val(self);
    Tensor& gx = g.grd(xi);
    for (int i = 0; i < gy.numel(); ++i) gx.at(i) += (1.0 - y.at(i) * y.at(i)) * gy.at(i);
  });
}

Value Graph::sigmoid(Value xv) {
  check_id(xv);
  Tensor y = val(xv.id);
  for (int i = 0; i < y.numel(); ++i) y.at(i) = 1.0 / (1.0 + std::exp(-y.at(i)));
  int xi = xv.id;
  return make("sigmoid", std::move(y), {xi}, [xi](Graph& g, int self) {
    if (!g.nodes_[xi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    const Tensor& y = g.val(self);
    Tensor& gx = g.grd(xi);
    for (int i = 0; i < gy.numel(); ++i) gx.at(i) += y.at(i) * (1.0 - y.at(i)) * gy.at(i);
  });
}

Value Graph::slice(Value xv, int offset, int len) {
  check_id(xv);
  const Tensor& x = val(xv.id);
  if (x.shape.size() != 1 || offset < 0 || len < 1 || offset + len > x.numel())
    throw DimensionError("slice [" + std::to_string(offset) + "," +
                         std::to_string(offset + len) + ") out of range for " +
                         shape_str(x.shape));
  Tensor y = Tensor::zeros({len});
  for (int i = 0; i < len; ++i) y.at(i) = x.at(offset + i);
  int xi = xv.id;
  return make("slice", std::move(y), {xi}, [xi, offset, len](Graph& g, int self) {
    if (!g.nodes_[xi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    Tensor& gx = g.grd(xi);
    for (int i = 0; i < len; ++i) gx.at(offset + i) += gy.at(i);
  });
}

Value Graph::concat(Value av, Value bv) {
  check_id(av), check_id(bv);
  const Tensor& a = val(av.id);
  const Tensor& b = val(bv.id);
  if (a.shape.size() != 1 || b.shape.size() != 1) dim_error("concat", a.shape, b.shape);
  int na = a.numel(), nb = b.numel();
  Tensor y = Tensor::zeros({na + nb});
  for (int i = 0; i < na; ++i) y.at(i) = a.at(i);
  for (int i = 0; i < nb; ++i) y.at(na + i) = b.at(i);
  int ai = av.id, bi = bv.id;
  return make("concat", std::move(y), {ai, bi}, [ai, bi, na, nb](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    if (g.nodes_[ai].needs_grad) {
      Tensor& ga = g.grd(ai);
      for (int i = 0; i < na; ++i) ga.at(i) += gy.at(i);
    }
    if (g.nodes_[bi].needs_grad) {
      Tensor& gb = g.grd(bi);
      for (int i = 0; i < nb; ++i) gb.at(i) += gy.at(na + i);
    }
  });
}

Value Graph::dot(Value av, Value bv) {
  check_id(av), check_id(bv);
  const Tensor& a = val(av.id);
  const Tensor& b = val(bv.id);
  if (!a.same_shape(b) || a.shape.size() != 1) dim_error("dot", a.shape, b.shape);
  double acc = 0.0;
  for (int i = 0; i < a.numel(); ++i) acc += a.at(i) * b.at(i);
  int ai = av.id, bi = bv.id;
  return make("dot", Tensor::scalar(acc), {ai, bi}, [ai, bi](Graph& g, int self) {
    double gy = g.grd(self).at(0);
    const Tensor& a = g.val(ai);
    const Tensor& b = g.val(bi);
    if (g.nodes_[ai].needs_grad) {
      Tensor& ga = g.grd(ai);
      for (int i = 0; i < a.numel(); ++i) ga.at(i) += b.at(i) * gy;
    }
    if (g.nodes_[bi].needs_grad) {
      Tensor& gb = g.grd(bi);
      for (int i = 0; i < b.numel(); ++i) gb.at(i) += a.at(i) * gy;
    }
  });
}

Value Graph::stack(std::span<const Value> scalars) {
  if (scalars.empty()) throw EmptyInputError("stack of zero scalars");
  std::vector<int> ids;
  ids.reserve(scalars.size());
  Tensor y = Tensor::zeros({static_cast<int>(scalars.size())});
  for (size_t i = 0; i < scalars.size(); ++i) {
    check_id(scalars[i]);
    const Tensor& s = val(scalars[i].id);
    if (!s.is_scalar()) throw DimensionError("stack expects scalars, got " + shape_str(s.shape));
    y.at(static_cast<int>(i)) = s.at(0);
    ids.push_back(scalars[i].id);
  }
  return make("stack", std::move(y), ids, [ids](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    for (size_t i = 0; i < ids.size(); ++i) {
      if (!g.nodes_[ids[i]].needs_grad) continue;
      g.grd(ids[i]).at(0) += gy.at(static_cast<int>(i));
    }
  });
}

Value Graph::softmax(Value vv) {
  check_id(vv);
  const Tensor& v = val(vv.id);
  if (v.shape.size() != 1 || v.numel() < 1)
    throw EmptyInputError("softmax needs a non-empty vector, got " + shape_str(v.shape));
  int n = v.numel();
  double m = v.at(0);
  for (int i = 1; i < n; ++i) m = std::max(m, v.at(i));
  Tensor y = Tensor::zeros({n});
  double z = 0.0;
  for (int i = 0; i < n; ++i) {
    y.at(i) = std::exp(v.at(i) - m);
    z += y.at(i);
  }
  for (int i = 0; i < n; ++i) y.at(i) /= z;
  int vi = vv.id;
  return make("softmax", std::move(y), {vi}, [vi, n](Graph& g, int self) {
    if (!g.nodes_[vi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    const Tensor& p = g.val(self);
    Tensor& gv = g.grd(vi);
    double inner = 0.0;
    for (int i = 0; i < n; ++i) inner += gy.at(i) * p.at(i);
    for (int i = 0; i < n; ++i) gv.at(i) += p.at(i) * (gy.at(i) - inner);
  });
}

Value Graph::weighted_sum(Value wv, std::span<const Value> vectors) {
  check_id(wv);
  const Tensor& w = val(wv.id);
  if (w.shape.size() != 1 || static_cast<size_t>(w.numel()) != vectors.size())
    throw DimensionError("weighted_sum: " + std::to_string(vectors.size()) +
                         " vectors vs weights " + shape_str(w.shape));
  if (vectors.empty()) throw EmptyInputError("weighted_sum over zero vectors");
  std::vector<int> ids;
  ids.reserve(vectors.size() + 1);
  ids.push_back(wv.id);
  check_id(vectors[0]);
  int dim = val(vectors[0].id).numel();
  Tensor y = Tensor::zeros({dim});
  for (size_t t = 0; t < vectors.size(); ++t) {
    check_id(vectors[t]);
    const Tensor& h = val(vectors[t].id);
    if (h.shape.size() != 1 || h.numel() != dim)
      dim_error("weighted_sum vector " + std::to_string(t), h.shape, Shape{dim});
    double wt = w.at(static_cast<int>(t));
    for (int i = 0; i < dim; ++i) y.at(i) += wt * h.at(i);
    ids.push_back(vectors[t].id);
  }
  return make("weighted_sum", std::move(y), ids, [ids, dim](Graph& g, int self) {
    const Tensor& gy = g.grd(self);
    int wi = ids[0];
    const Tensor& w = g.val(wi);
    for (size_t t = 1; t < ids.size(); ++t) {
      const Tensor& h = g.val(ids[t]);
      if (g.nodes_[wi].needs_grad) {
        double acc = 0.0;
        for (int i = 0; i < dim; ++i) acc += gy.at(i) * h.at(i);
        g.grd(wi).at(static_cast<int>(t - 1)) += acc;
      }
      if (g.nodes_[ids[t]].needs_grad) {
        Tensor& gh = g.grd(ids[t]);
        double wt = w.at(static_cast<int>(t - 1));
        for (int i = 0; i < dim; ++i) gh.at(i) += wt * gy.at(i);
      }
    }
  });
}

Value Graph::pick_row(Value mv, int row) {
  check_id(mv);
  const Tensor& m = val(mv.id);
  if (m.shape.size() != 2) throw DimensionError("pick_row on non-matrix " + shape_str(m.shape));
  if (row < 0 || row >= m.rows())
    throw DimensionError("row " + std::to_string(row) + " out of range for " +
                         shape_str(m.shape));
  int d = m.cols();
  Tensor y = Tensor::zeros({d});
  for (int i = 0; i < d; ++i) y.at(i) = m.at(row, i);
  int mi = mv.id;
  return make("pick_row", std::move(y), {mi}, [mi, row, d](Graph& g, int self) {
    if (!g.nodes_[mi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    Tensor& gm = g.grd(mi);
    for (int i = 0; i < d; ++i) gm.at(row, i) += gy.at(i);
  });
}

Value Graph::cross_entropy_logits(Value zv, int target) {
  check_id(zv);
  const Tensor& z = val(zv.id);
  if (z.shape.size() != 1 || z.numel() < 1) throw EmptyInputError("cross_entropy on empty logits");
  if (target < 0 || target >= z.numel())
    throw DimensionError("cross_entropy target " + std::to_string(target) +
                         " out of range for " + shape_str(z.shape));
  int n = z.numel();
  double m = z.at(0);
  for (int i = 1; i < n; ++i) m = std::max(m, z.at(i));
  std::vector<double> probs(static_cast<size_t>(n));
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[static_cast<size_t>(i)] = std::exp(z.at(i) - m);
    acc += probs[static_cast<size_t>(i)];
  }
  for (int i = 0; i < n; ++i) probs[static_cast<size_t>(i)] /= acc;
  double loss = std::log(acc) + m - z.at(target);
  int zi = zv.id;
  return make("cross_entropy", Tensor::scalar(loss), {zi},
              [zi, target, probs = std::move(probs)](Graph& g, int self) {
                if (!g.nodes_[zi].needs_grad) return;
                double gy = g.grd(self).at(0);
                Tensor& gz = g.grd(zi);
                for (int i = 0; i < gz.numel(); ++i) {
                  double p = probs[static_cast<size_t>(i)];
                  gz.at(i) += (p - (i == target ? 1.0 : 0.0)) * gy;
                }
              });
}

Value Graph::sum(Value xv) {
  check_id(xv);
  const Tensor& x = val(xv.id);
  double acc = 0.0;
  for (int i = 0; i < x.numel(); ++i) acc += x.at(i);
  int xi = xv.id;
  return make("sum", Tensor::scalar(acc), {xi}, [xi](Graph& g, int self) {
    if (!g.nodes_[xi].needs_grad) return;
    double gy = g.grd(self).at(0);
    Tensor& gx = g.grd(xi);
    for (int i = 0; i < gx.numel(); ++i) gx.at(i) += gy;
  });
}

Value Graph::scale(Value xv, double k) {
  check_id(xv);
  Tensor y = val(xv.id);
  for (int i = 0; i < y.numel(); ++i) y.at(i) *= k;
  int xi = xv.id;
  return make("scale", std::move(y), {xi}, [xi, k](Graph& g, int self) {
    if (!g.nodes_[xi].needs_grad) return;
    const Tensor& gy = g.grd(self);
    Tensor& gx = g.grd(xi);
    for (int i = 0; i < gy.numel(); ++i) gx.at(i) += k * gy.at(i);
  });
}

void Graph::backward(Value loss) {
  check_id(loss);
  const Node& ln = nodes_[static_cast<size_t>(loss.id)];
  if (!ln.value.is_scalar())
    throw ContractError("backward requires a scalar loss, got " + shape_str(ln.value.shape));
  // (re)initialize gradient buffers for every node that participates
  for (Node& n : nodes_) {
    if (n.needs_grad)
      n.grad = Tensor::zeros(n.value.shape);
    else
      n.grad = Tensor();
  }
  if (!nodes_[static_cast<size_t>(loss.id)].needs_grad)
    nodes_[static_cast<size_t>(loss.id)].grad = Tensor::zeros(ln.value.shape);
  nodes_[static_cast<size_t>(loss.id)].grad.at(0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs_grad || !n.back) continue;
    n.back(*this, id);
  }
  // fold leaf gradients into their bound parameters, in creation order
  for (Node& n : nodes_) {
    if (n.bound == nullptr || n.grad.data.empty()) continue;
    Tensor& pg = n.bound->grad;
    for (int i = 0; i < pg.numel(); ++i) pg.at(i) += n.grad.at(i);
  }
}

// ---------------------------------------------------------------------------

GradCheckReport check_gradient(const std::function<double(bool)>& fn,
                               std::span<Param* const> params, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2))
    throw ContractError("check_gradient eps must be in (0, 1e-2], got " + std::to_string(eps));
  for (Param* p : params) p->zero_grad();
  double l1 = fn(true);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Param* p : params) analytic.push_back(p->grad);
  double l2 = fn(false);
  if (std::memcmp(&l1, &l2, sizeof(double)) != 0)
    throw ContractError("check_gradient: fn is not deterministic (" + std::to_string(l1) +
                        " vs " + std::to_string(l2) + ")");

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Param& p = *params[pi];
    for (int i = 0; i < p.value.numel(); ++i) {
      double saved = p.value.at(i);
      p.value.at(i) = saved + eps;
      double fp = fn(false);
      p.value.at(i) = saved - eps;
      double fm = fn(false);
      p.value.at(i) = saved;
      double numeric = (fp - fm) / (2.0 * eps);
      double a = analytic[pi].at(i);
      double rel = std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
        report.worst_index = i;
      }
    }
  }
  return report;
}

}  // namespace mmcap
