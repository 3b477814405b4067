#include "nbode/tape.hpp"

#include <string>

#include "nbode/errors.hpp"

namespace nbode::ad {

const RowMat& Var::value() const { return tape_->value(id_); }
bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Var Tape::leaf(RowMat value) {
  Node n;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  n.needs_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::constant(RowMat value) {
  Node n;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

Var Tape::record(RowMat value, std::span<const int> parents, Backward backward) {
  if (swept_) throw EngineError("cannot record on a tape after its backward pass");
  Node n;
  n.rows = value.rows();
  n.cols = value.cols();
  n.value = std::move(value);
  for (int p : parents) n.needs_grad = n.needs_grad || needs_grad(p);
  if (n.needs_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size() - 1)};
}

void Tape::accumulate(int id, const RowMat& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.needs_grad) return;
  if (g.rows() != n.rows || g.cols() != n.cols) {
    throw EngineError("adjoint shape mismatch at node " + std::to_string(id));
  }
  if (n.adjoint.size() == 0) {
    n.adjoint = g;
  } else {
    n.adjoint += g;
  }
}

void Tape::backward(const Var& root) {
  if (&root.tape() != this) throw EngineError("root belongs to a different tape");
  if (swept_) throw EngineError("tape already swept");
  const Node& r = nodes_[static_cast<std::size_t>(root.id())];
  if (r.rows != 1 || r.cols != 1) {
    throw ArgumentError("gradient needs a scalar output, got " + std::to_string(r.rows) + "x" +
                        std::to_string(r.cols));
  }
  swept_ = true;
  accumulate(root.id(), RowMat::Ones(1, 1));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && n.adjoint.size() > 0) n.backward(*this, n.value, n.adjoint);
    if (!n.is_leaf && i != root.id()) {
      n.backward = nullptr;
      RowMat().swap(n.value);
      RowMat().swap(n.adjoint);
    }
  }
}

RowMat Tape::grad(const Var& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (n.adjoint.size() == 0) return RowMat::Zero(n.rows, n.cols);
  return n.adjoint;
}

namespace {

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw EngineError("operands live on different tapes");
  return a.tape();
}

Var binary(const Var& a, const Var& b, BinOp op) {
  Tape& t = same_tape(a, b);
  RowMat out = broadcast_binary(a.value(), b.value(), op);
  const int ia = a.id(), ib = b.id();
  const int parents[] = {ia, ib};
  return t.record(std::move(out), parents, [ia, ib, op](Tape& tape, const RowMat& value, const RowMat& adj) {
    const RowMat& av = tape.value(ia);
    const RowMat& bv = tape.value(ib);
    const bool ga = tape.needs_grad(ia), gb = tape.needs_grad(ib);
    switch (op) {
      case BinOp::Add:
        if (ga) tape.accumulate(ia, reduce_to(adj, av.rows(), av.cols()));
        if (gb) tape.accumulate(ib, reduce_to(adj, bv.rows(), bv.cols()));
        break;
      case BinOp::Sub:
        if (ga) tape.accumulate(ia, reduce_to(adj, av.rows(), av.cols()));
        if (gb) tape.accumulate(ib, -reduce_to(adj, bv.rows(), bv.cols()));
        break;
      case BinOp::Mul:
        if (ga) tape.accumulate(ia, reduce_to(broadcast_binary(adj, bv, BinOp::Mul), av.rows(), av.cols()));
        if (gb) tape.accumulate(ib, reduce_to(broadcast_binary(adj, av, BinOp::Mul), bv.rows(), bv.cols()));
        break;
      case BinOp::Div:
        if (ga) tape.accumulate(ia, reduce_to(broadcast_binary(adj, bv, BinOp::Div), av.rows(), av.cols()));
        if (gb) {
          const RowMat q = broadcast_binary(adj.cwiseProduct(value), bv, BinOp::Div);
          tape.accumulate(ib, -reduce_to(q, bv.rows(), bv.cols()));
        }
        break;
    }
  });
}

// y = scale * x + shift, elementwise with constants.
Var scale_shift(const Var& x, double scale, double shift) {
  RowMat out = (scale * x.value().array() + shift).matrix();
  const int ix = x.id();
  const int parents[] = {ix};
  return x.tape().record(std::move(out), parents, [ix, scale](Tape& tape, const RowMat&, const RowMat& adj) {
    tape.accumulate(ix, scale * adj);
  });
}

}  // namespace

Var operator+(const Var& a, const Var& b) { return binary(a, b, BinOp::Add); }
Var operator-(const Var& a, const Var& b) { return binary(a, b, BinOp::Sub); }
Var operator*(const Var& a, const Var& b) { return binary(a, b, BinOp::Mul); }
Var operator/(const Var& a, const Var& b) { return binary(a, b, BinOp::Div); }
Var operator-(const Var& a) { return scale_shift(a, -1.0, 0.0); }
Var operator+(const Var& a, double c) { return scale_shift(a, 1.0, c); }
Var operator+(double c, const Var& a) { return scale_shift(a, 1.0, c); }
Var operator-(const Var& a, double c) { return scale_shift(a, 1.0, -c); }
Var operator-(double c, const Var& a) { return scale_shift(a, -1.0, c); }
Var operator*(const Var& a, double c) { return scale_shift(a, c, 0.0); }
Var operator*(double c, const Var& a) { return scale_shift(a, c, 0.0); }
Var operator/(const Var& a, double c) { return scale_shift(a, 1.0 / c, 0.0); }
Var operator/(double c, const Var& a) { return a.tape().constant(c) / a; }

Var tanh(const Var& x) {
  RowMat out = x.value();
  tanh_inplace(out);
  const int ix = x.id();
  const int parents[] = {ix};
  return x.tape().record(std::move(out), parents, [ix](Tape& tape, const RowMat& y, const RowMat& adj) {
    tape.accumulate(ix, (adj.array() * (1.0 - y.array().square())).matrix());
  });
}

Var exp(const Var& x) {
  RowMat out = x.value().array().exp().matrix();
  const int ix = x.id();
  const int parents[] = {ix};
  return x.tape().record(std::move(out), parents, [ix](Tape& tape, const RowMat& y, const RowMat& adj) {
    tape.accumulate(ix, adj.cwiseProduct(y));
  });
}

Var sum(const Var& x) {
  const int ix = x.id();
  const int parents[] = {ix};
  return x.tape().record(RowMat::Constant(1, 1, x.value().sum()), parents,
                         [ix](Tape& tape, const RowMat&, const RowMat& adj) {
                           const RowMat& xv = tape.value(ix);
                           tape.accumulate(ix, RowMat::Constant(xv.rows(), xv.cols(), adj(0, 0)));
                         });
}

Var affine(const Var& x, const Var& w, const Var& b) {
  Tape& t = same_tape(x, w);
  same_tape(x, b);
  RowMat out = affine(Tensor(x.value()), Tensor(w.value()), Tensor(b.value())).value();
  const int ix = x.id(), iw = w.id(), ib = b.id();
  const int parents[] = {ix, iw, ib};
  return t.record(std::move(out), parents, [ix, iw, ib](Tape& tape, const RowMat&, const RowMat& adj) {
    if (tape.needs_grad(ix)) tape.accumulate(ix, adj * tape.value(iw));
    if (tape.needs_grad(iw)) tape.accumulate(iw, adj.transpose() * tape.value(ix));
    if (tape.needs_grad(ib)) tape.accumulate(ib, adj.colwise().sum());
  });
}

Var linear(const Var& x, const Var& w) {
  Tape& t = same_tape(x, w);
  if (x.cols() != w.cols()) throw ArgumentError("linear: input width does not match weights");
  RowMat out = x.value() * w.value().transpose();
  const int ix = x.id(), iw = w.id();
  const int parents[] = {ix, iw};
  return t.record(std::move(out), parents, [ix, iw](Tape& tape, const RowMat&, const RowMat& adj) {
    if (tape.needs_grad(ix)) tape.accumulate(ix, adj * tape.value(iw));
    if (tape.needs_grad(iw)) tape.accumulate(iw, adj.transpose() * tape.value(ix));
  });
}

Var zeros_like(const Var& x) { return x.tape().constant(RowMat::Zero(x.rows(), x.cols())); }

Var tanh_tangent(const Var& y0, const Var& a1) {
  Tape& t = same_tape(y0, a1);
  RowMat out = detail::tanh_tangent(y0.value(), a1.value());
  const int iy = y0.id(), ia = a1.id();
  const int parents[] = {iy, ia};
  return t.record(std::move(out), parents, [iy, ia](Tape& tape, const RowMat&, const RowMat& adj) {
    RowMat g_a, g_y;
    const bool want_a = tape.needs_grad(ia), want_y = tape.needs_grad(iy);
    detail::tanh_tangent_backward(tape.value(iy), tape.value(ia), adj, want_a ? &g_a : nullptr,
                                  want_y ? &g_y : nullptr);
    if (want_a) tape.accumulate(ia, g_a);
    if (want_y) tape.accumulate(iy, g_y);
  });
}

Var tanh_curvature(const Var& y0, const Var& a1, const Var* a2) {
  Tape& t = same_tape(y0, a1);
  if (a2) same_tape(y0, *a2);
  RowMat out = detail::tanh_curvature(y0.value(), a1.value(), a2 ? &a2->value() : nullptr);
  const int iy = y0.id(), i1 = a1.id(), i2 = a2 ? a2->id() : -1;
  std::vector<int> parents{iy, i1};
  if (a2) parents.push_back(i2);
  return t.record(std::move(out), parents, [iy, i1, i2](Tape& tape, const RowMat&, const RowMat& adj) {
    RowMat g1, g2, gy;
    const bool want1 = tape.needs_grad(i1), want2 = i2 >= 0 && tape.needs_grad(i2), wanty = tape.needs_grad(iy);
    detail::tanh_curvature_backward(tape.value(iy), tape.value(i1), i2 >= 0 ? &tape.value(i2) : nullptr, adj,
                                    want1 ? &g1 : nullptr, want2 ? &g2 : nullptr, wanty ? &gy : nullptr);
    if (want1) tape.accumulate(i1, g1);
    if (want2) tape.accumulate(i2, g2);
    if (wanty) tape.accumulate(iy, gy);
  });
}

Var squared_error_sum(const Var& pred, const RowMat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw ArgumentError("squared_error_sum: prediction and target shapes differ");
  }
  RowMat diff = pred.value() - target;
  const double total = diff.squaredNorm();
  const int ip = pred.id();
  const int parents[] = {ip};
  return pred.tape().record(RowMat::Constant(1, 1, total), parents,
                            [ip, diff = std::move(diff)](Tape& tape, const RowMat&, const RowMat& adj) {
                              tape.accumulate(ip, (2.0 * adj(0, 0)) * diff);
                            });
}

}  // namespace nbode::ad
