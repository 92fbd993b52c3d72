#include "part/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "part/error.hpp"
#include "part/kernels.hpp"

namespace part::ad {

namespace {

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

Tape& tape_of(Var a, const char* op) {
  if (!a.valid()) throw ShapeError(std::string(op) + ": invalid operand");
  return *a.tape();
}

Tape& same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || !b.valid() || a.tape() != b.tape()) {
    throw ShapeError(std::string(op) + ": operands on different tapes");
  }
  return *a.tape();
}

bool needs(const Tape& t, Var v) { return v.valid() && t.requires_grad(v.id()); }

}  // namespace

const Tensor& Var::value() const { return tape_->value_of(id_); }
const Tensor& Var::grad() const { return tape_->grad_view(id_); }

Var Tape::record(Tensor value, bool requires_grad, Backward back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) { return record(std::move(value), false, nullptr); }

Var Tape::input(Tensor value) { return record(std::move(value), true, nullptr); }

Var Tape::param(const Parameter& p) {
  Node n;
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::frozen(const Parameter& p) {
  Node n;
  n.external = &p.value;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value_of(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.value;
}

Tensor& Tape::grad_of(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) {
    const Tensor& v = value_of(id);
    n.grad = Tensor(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::sweep(Var loss) {
  if (loss.tape() != this) throw ShapeError("backward: loss recorded on a different tape");
  if (value_of(loss.id()).size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got " + shape_string(value_of(loss.id())));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_of(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    if (nodes_[i].back && !nodes_[i].grad.empty()) nodes_[i].back(*this, i);
  }
}

void Tape::backward(Var loss) {
  sweep(loss);
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) const_cast<Parameter*>(n.param)->grad.add(n.grad);
  }
}

void Tape::backward(Var loss, std::span<Tensor> sink) {
  sweep(loss);
  for (Node& n : nodes_) {
    if (n.param != nullptr && !n.grad.empty()) sink[n.param->index].add(n.grad);
  }
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  const kernels::MatShape s{av.rows(), av.cols(), bv.cols()};
  Tensor out(s.m, s.n);
  kernels::matmul(av.data(), bv.data(), out.data(), s, false);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) {
      // dA[m,k] += G[m,n] * B[k,n]^T
      kernels::matmul_nt(g.data(), tp.value_of(ib).data(), tp.grad_of(ia).data(), {s.m, s.n, s.k}, true);
    }
    if (tp.requires_grad(ib)) {
      // dB[k,n] += A[m,k]^T * G[m,n]
      kernels::matmul_tn(tp.value_of(ia).data(), g.data(), tp.grad_of(ib).data(), {s.k, s.m, s.n}, true);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("matmul_nt", av, bv);
  const kernels::MatShape s{av.rows(), av.cols(), bv.rows()};
  Tensor out(s.m, s.n);
  kernels::matmul_nt(av.data(), bv.data(), out.data(), s, false);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) {
      // dA[m,k] += G[m,n] * B[n,k]
      kernels::matmul(g.data(), tp.value_of(ib).data(), tp.grad_of(ia).data(), {s.m, s.n, s.k}, true);
    }
    if (tp.requires_grad(ib)) {
      // dB[n,k] += G[m,n]^T * A[m,k]
      kernels::matmul_tn(g.data(), tp.value_of(ia).data(), tp.grad_of(ib).data(), {s.n, s.m, s.k}, true);
    }
  });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape() != bv.shape()) shape_fail("add", av, bv);
  Tensor out = av;
  out.add(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    if (tp.requires_grad(ia)) tp.grad_of(ia).add(g);
    if (tp.requires_grad(ib)) tp.grad_of(ib).add(g);
  });
}

Var add_row(Var x, Var row) {
  Tape& t = same_tape(x, row, "add_row");
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) shape_fail("add_row", xv, rv);
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto o = out.row(r);
    for (std::size_t c = 0; c < o.size(); ++c) o[c] += rv[c];
  }
  const std::size_t ix = x.id(), ir = row.id();
  return t.record(std::move(out), needs(t, x) || needs(t, row), [ix, ir](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    if (tp.requires_grad(ix)) tp.grad_of(ix).add(g);
    if (tp.requires_grad(ir)) {
      Tensor& gr = tp.grad_of(ir);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto gg = g.row(r);
        for (std::size_t c = 0; c < gg.size(); ++c) gr[c] += gg[c];
      }
    }
  });
}

Var linear(Var x, Var weight, Var bias) {
  Var y = matmul(x, weight);
  return bias.valid() ? add_row(y, bias) : y;
}

Var scale(Var x, double c) {
  Tape& t = tape_of(x, "scale");
  Tensor out = x.value();
  for (auto& v : out.data()) v *= c;
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x), [ix, c](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    Tensor& gx = tp.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

Var gelu(Var x) {
  Tape& t = tape_of(x, "gelu");
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& xv = tp.value_of(ix);
    Tensor& gx = tp.grad_of(ix);
    const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var row_softmax(Var x) {
  Tape& t = tape_of(x, "row_softmax");
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), xv.cols());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    auto o = out.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double z = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      o[c] = std::exp(in[c] - mx);
      z += o[c];
    }
    for (auto& v : o) v /= z;
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    const Tensor& y = tp.value_of(self);
    Tensor& gx = tp.grad_of(ix);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      auto out = gx.row(r);
      for (std::size_t c = 0; c < yr.size(); ++c) out[c] += yr[c] * (gr[c] - dot);
    }
  });
}

Var layernorm(Var x, Var gain, Var shift, double epsilon) {
  Tape& t = same_tape(x, gain, "layernorm");
  same_tape(x, shift, "layernorm");
  const Tensor& xv = x.value();
  const Tensor& gv = gain.value();
  const Tensor& bv = shift.value();
  if (gv.rows() != 1 || gv.cols() != xv.cols()) shape_fail("layernorm", xv, gv);
  if (bv.rows() != 1 || bv.cols() != xv.cols()) shape_fail("layernorm", xv, bv);
  const std::size_t n = xv.cols();
  Tensor normed(xv.rows(), n);
  std::vector<double> inv_std(xv.rows());
  Tensor out(xv.rows(), n);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto in = xv.row(r);
    double mean = 0.0;
    for (double v : in) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + epsilon);
    auto nr = normed.row(r);
    auto o = out.row(r);
    for (std::size_t c = 0; c < n; ++c) {
      nr[c] = (in[c] - mean) * inv_std[r];
      o[c] = nr[c] * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = shift.id();
  const bool req = needs(t, x) || needs(t, gain) || needs(t, shift);
  return t.record(std::move(out), req,
                  [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_view(self);
                    const Tensor& gv = tp.value_of(ig);
                    const std::size_t n = g.cols();
                    if (tp.requires_grad(ig) || tp.requires_grad(ib)) {
                      for (std::size_t r = 0; r < g.rows(); ++r) {
                        for (std::size_t c = 0; c < n; ++c) {
                          if (tp.requires_grad(ig)) tp.grad_of(ig)[c] += g(r, c) * normed(r, c);
                          if (tp.requires_grad(ib)) tp.grad_of(ib)[c] += g(r, c);
                        }
                      }
                    }
                    if (tp.requires_grad(ix)) {
                      Tensor& gx = tp.grad_of(ix);
                      for (std::size_t r = 0; r < g.rows(); ++r) {
                        double mean_d = 0.0, mean_dn = 0.0;
                        for (std::size_t c = 0; c < n; ++c) {
                          const double d = g(r, c) * gv[c];
                          mean_d += d;
                          mean_dn += d * normed(r, c);
                        }
                        mean_d /= static_cast<double>(n);
                        mean_dn /= static_cast<double>(n);
                        for (std::size_t c = 0; c < n; ++c) {
                          const double d = g(r, c) * gv[c];
                          gx(r, c) += inv_std[r] * (d - mean_d - normed(r, c) * mean_dn);
                        }
                      }
                    }
                  });
}

Var concat_last_dim(Var a, Var b) {
  const Var parts[2] = {a, b};
  return concat_cols(parts);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Tape& t = tape_of(parts[0], "concat_cols");
  const std::size_t rows = parts[0].rows();
  std::size_t total = 0;
  bool req = false;
  for (const Var& p : parts) {
    same_tape(parts[0], p, "concat_cols");
    if (p.rows() != rows) shape_fail("concat_cols", parts[0].value(), p.value());
    total += p.cols();
    req = req || needs(t, p);
  }
  Tensor out(rows, total);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    for (std::size_t r = 0; r < rows; ++r) std::copy(v.row(r).begin(), v.row(r).end(), out.row(r).begin() + off);
    ids.push_back(p.id());
    offsets.push_back(off);
    off += v.cols();
  }
  return t.record(std::move(out), req, [ids, offsets](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Tensor& gp = tp.grad_of(ids[k]);
      for (std::size_t r = 0; r < gp.rows(); ++r) {
        auto src = g.row(r).subspan(offsets[k], gp.cols());
        auto dst = gp.row(r);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
      }
    }
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t width) {
  Tape& t = tape_of(x, "slice_cols");
  const Tensor& xv = x.value();
  if (start + width > xv.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + width) +
                     ") exceeds " + shape_string(xv));
  }
  Tensor out(xv.rows(), width);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    auto src = xv.row(r).subspan(start, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x), [ix, start](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    Tensor& gx = tp.grad_of(ix);
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto dst = gx.row(r).subspan(start, g.cols());
      auto src = g.row(r);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  Tape& t = tape_of(x, "gather_rows");
  const Tensor& xv = x.value();
  Tensor out(rows.size(), xv.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] >= xv.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[k]) + " out of range for " + shape_string(xv));
    }
    std::copy(xv.row(rows[k]).begin(), xv.row(rows[k]).end(), out.row(k).begin());
  }
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x),
                  [ix, idx = std::vector<std::size_t>(rows.begin(), rows.end())](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad_view(self);
                    Tensor& gx = tp.grad_of(ix);
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      auto dst = gx.row(idx[k]);
                      auto src = g.row(k);
                      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
  std::vector<std::size_t> rows(count);
  for (std::size_t k = 0; k < count; ++k) rows[k] = start + k;
  return gather_rows(x, rows);
}

Var concat_rows(Var a, Var b) {
  Tape& t = same_tape(a, b, "concat_rows");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_fail("concat_rows", av, bv);
  Tensor out(av.rows() + bv.rows(), av.cols());
  std::copy(av.data().begin(), av.data().end(), out.data().begin());
  std::copy(bv.data().begin(), bv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(av.size()));
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(std::move(out), needs(t, a) || needs(t, b), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    std::size_t off = 0;
    for (std::size_t id : {ia, ib}) {
      const std::size_t n = tp.value_of(id).size();
      if (tp.requires_grad(id)) {
        Tensor& gi = tp.grad_of(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[off + i];
      }
      off += n;
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tape& t = tape_of(x, "reshape");
  const Tensor& xv = x.value();
  if (rows * cols != xv.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(xv) + " as [" + std::to_string(rows) + ", " +
                     std::to_string(cols) + "]");
  }
  Tensor out(rows, cols, std::vector<double>(xv.data().begin(), xv.data().end()));
  const std::size_t ix = x.id();
  return t.record(std::move(out), needs(t, x), [ix](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_view(self);
    Tensor& gx = tp.grad_of(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Var sum(Var x) {
  Tape& t = tape_of(x, "sum");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t ix = x.id();
  return t.record(Tensor::scalar(s), needs(t, x), [ix](Tape& tp, std::size_t self) {
    const double g = tp.grad_view(self)[0];
    for (auto& v : tp.grad_of(ix).data()) v += g;
  });
}

Var mse(Var pred, Var target) {
  Tape& t = same_tape(pred, target, "mse");
  const Tensor& p = pred.value();
  const Tensor& y = target.value();
  if (p.shape() != y.shape()) shape_fail("mse", p, y);
  if (p.size() == 0) throw ShapeError("mse: empty operands");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
  const auto m = static_cast<double>(p.size());
  const std::size_t ip = pred.id(), iy = target.id();
  return t.record(Tensor::scalar(s / m), needs(t, pred) || needs(t, target), [ip, iy, m](Tape& tp, std::size_t self) {
    const double g = tp.grad_view(self)[0];
    const Tensor& p = tp.value_of(ip);
    const Tensor& y = tp.value_of(iy);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double d = 2.0 * (p[i] - y[i]) / m * g;
      if (tp.requires_grad(ip)) tp.grad_of(ip)[i] += d;
      if (tp.requires_grad(iy)) tp.grad_of(iy)[i] -= d;
    }
  });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  Tape& t = tape_of(logits, "softmax_cross_entropy");
  const Tensor& z = logits.value();
  if (labels.size() != z.rows()) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " + shape_string(z));
  }
  Tensor probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    const auto label = static_cast<std::size_t>(labels[r]);
    if (labels[r] < 0 || label >= z.cols()) throw ShapeError("softmax_cross_entropy: label out of range");
    auto in = z.row(r);
    const double mx = *std::max_element(in.begin(), in.end());
    double zsum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      probs(r, c) = std::exp(in[c] - mx);
      zsum += probs(r, c);
    }
    for (std::size_t c = 0; c < in.size(); ++c) probs(r, c) /= zsum;
    loss -= (in[label] - mx) - std::log(zsum);
  }
  const auto rows = static_cast<double>(z.rows());
  const std::size_t iz = logits.id();
  return t.record(Tensor::scalar(loss / rows), needs(t, logits),
                  [iz, rows, probs = std::move(probs),
                   lab = std::vector<int>(labels.begin(), labels.end())](Tape& tp, std::size_t self) {
                    const double g = tp.grad_view(self)[0];
                    Tensor& gz = tp.grad_of(iz);
                    for (std::size_t r = 0; r < probs.rows(); ++r) {
                      for (std::size_t c = 0; c < probs.cols(); ++c) {
                        const double onehot = static_cast<std::size_t>(lab[r]) == c ? 1.0 : 0.0;
                        gz(r, c) += g * (probs(r, c) - onehot) / rows;
                      }
                    }
                  });
}

Var linear_select(Var x, Var weight, Var bias, std::span<const std::size_t> outputs) {
  Tape& t = same_tape(x, weight, "linear_select");
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  if (xv.rows() != 1 || xv.cols() != wv.cols()) shape_fail("linear_select", xv, wv);
  if (bias.valid() && (bias.value().rows() != 1 || bias.value().cols() != wv.rows())) {
    shape_fail("linear_select", wv, bias.value());
  }
  Tensor out(1, outputs.size());
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    if (outputs[k] >= wv.rows()) throw ShapeError("linear_select: output index out of range");
    auto w = wv.row(outputs[k]);
    double acc = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) acc += xv[c] * w[c];
    out[k] = bias.valid() ? acc + bias.value()[outputs[k]] : acc;
  }
  const std::size_t ix = x.id(), iw = weight.id();
  const std::size_t ib = bias.valid() ? bias.id() : SIZE_MAX;
  const bool req = needs(t, x) || needs(t, weight) || needs(t, bias);
  return t.record(std::move(out), req,
                  [ix, iw, ib, idx = std::vector<std::size_t>(outputs.begin(), outputs.end())](Tape& tp,
                                                                                              std::size_t self) {
                    const Tensor& g = tp.grad_view(self);
                    const Tensor& xv = tp.value_of(ix);
                    const Tensor& wv = tp.value_of(iw);
                    for (std::size_t k = 0; k < idx.size(); ++k) {
                      const double gk = g[k];
                      if (tp.requires_grad(iw)) {
                        auto dw = tp.grad_of(iw).row(idx[k]);
                        for (std::size_t c = 0; c < dw.size(); ++c) dw[c] += gk * xv[c];
                      }
                      if (tp.requires_grad(ix)) {
                        Tensor& gx = tp.grad_of(ix);
                        auto w = wv.row(idx[k]);
                        for (std::size_t c = 0; c < w.size(); ++c) gx[c] += gk * w[c];
                      }
                      if (ib != SIZE_MAX && tp.requires_grad(ib)) tp.grad_of(ib)[idx[k]] += gk;
                    }
                  });
}

}  // namespace part::ad
