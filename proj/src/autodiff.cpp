// SPDX-License-Identifier: Apache-2.0
//
// Dynamic-tape reverse-mode autodiff over dense tensors. No broadcasting:
// every shape agreement is explicit in the op's contract.

#include "msmpc/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace msmpc::ad {

namespace {

constexpr double kSeluAlpha = 1.6732632423543772;
constexpr double kSeluLambda = 1.0507009873554805;

void require_same_tape(Value a, Value b, const char* op) {
  if (a.tape != b.tape) throw Fault(std::string(op) + ": operands on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Fault(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw Fault(std::string(op) + ": expected rank-2 tensor, got shape " + shape_str(t.shape()));
  }
}

// Elementwise unary op with pointwise derivative computed from the input.
Value unary_op(Value x, const char* /*name*/, double (*fwd)(double), double (*dfd)(double)) {
  const Tensor& xt = x.tensor();
  Tensor out(xt.shape());
  for (std::size_t i = 0; i < xt.numel(); ++i) out.at(i) = fwd(xt.at(i));
  Tensor saved = xt;
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {x.id},
                        [saved = std::move(saved), xid, dfd](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          for (std::size_t i = 0; i < g.numel(); ++i)
                            gx.at(i) += g.at(i) * dfd(saved.at(i));
                        });
}

}  // namespace

const Tensor& Value::tensor() const { return tape->value(id); }
const std::vector<std::size_t>& Value::shape() const { return tensor().shape(); }

Value Tape::leaf(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, nullptr});
  return Value{this, nodes_.size() - 1};
}

Value Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(backward)});
  return Value{this, nodes_.size() - 1};
}

Gradients Tape::backward(Value loss) const {
  if (loss.tape != this) throw Fault("backward: loss recorded on a different tape");
  const Tensor& lt = nodes_.at(loss.id).value;
  if (lt.numel() != 1) {
    throw Fault("backward: loss must be a scalar, got shape " + shape_str(lt.shape()));
  }
  std::vector<Tensor> grads(nodes_.size());
  std::vector<char> touched(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) grads[i] = Tensor::zeros(nodes_[i].value.shape());
  grads[loss.id].at(0) = 1.0;
  touched[loss.id] = 1;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!touched[i] || !node.backward) continue;
    for (std::size_t in : node.inputs) touched[in] = 1;
    node.backward(grads[i], grads);
  }
  return Gradients(std::move(grads));
}

Value add(Value a, Value b) {
  require_same_tape(a, b, "add");
  const Tensor& at = a.tensor();
  const Tensor& bt = b.tensor();
  require_same_shape(at, bt, "add");
  Tensor out(at.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = at.at(i) + bt.at(i);
  std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {ai, bi}, [ai, bi](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& ga = grads[ai];
    Tensor& gb = grads[bi];
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) += g.at(i);
    }
  });
}

Value sub(Value a, Value b) {
  require_same_tape(a, b, "sub");
  const Tensor& at = a.tensor();
  const Tensor& bt = b.tensor();
  require_same_shape(at, bt, "sub");
  Tensor out(at.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = at.at(i) - bt.at(i);
  std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {ai, bi}, [ai, bi](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& ga = grads[ai];
    Tensor& gb = grads[bi];
    for (std::size_t i = 0; i < g.numel(); ++i) {
      ga.at(i) += g.at(i);
      gb.at(i) -= g.at(i);
    }
  });
}

Value mul(Value a, Value b) {
  require_same_tape(a, b, "mul");
  const Tensor& at = a.tensor();
  const Tensor& bt = b.tensor();
  require_same_shape(at, bt, "mul");
  Tensor out(at.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out.at(i) = at.at(i) * bt.at(i);
  Tensor sa = at, sb = bt;
  std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(out), {ai, bi},
                        [ai, bi, sa = std::move(sa), sb = std::move(sb)](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& ga = grads[ai];
                          Tensor& gb = grads[bi];
                          for (std::size_t i = 0; i < g.numel(); ++i) {
                            ga.at(i) += g.at(i) * sb.at(i);
                            gb.at(i) += g.at(i) * sa.at(i);
                          }
                        });
}

Value matmul(Value a, Value b) {
  require_same_tape(a, b, "matmul");
  const Tensor& at = a.tensor();
  const Tensor& bt = b.tensor();
  require_rank2(at, "matmul");
  require_rank2(bt, "matmul");
  if (at.shape()[1] != bt.shape()[0]) {
    throw Fault("matmul: shape mismatch " + shape_str(at.shape()) + " vs " + shape_str(bt.shape()));
  }
  const std::size_t m = at.shape()[0], k = at.shape()[1], n = bt.shape()[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = at.at(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += av * bt.at(p, j);
    }
  }
  Tensor sa = at, sb = bt;
  std::size_t ai = a.id, bi = b.id;
  return a.tape->record(
      std::move(out), {ai, bi},
      [ai, bi, sa = std::move(sa), sb = std::move(sb), m, k, n](const Tensor& g, std::vector<Tensor>& grads) {
        Tensor& ga = grads[ai];
        Tensor& gb = grads[bi];
        // ga += g * sb^T ; gb += sa^T * g
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            const double gv = g.at(i, j);
            if (gv == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) {
              ga.at(i, p) += gv * sb.at(p, j);
              gb.at(p, j) += sa.at(i, p) * gv;
            }
          }
        }
      });
}

Value concat(const std::vector<Value>& xs, std::size_t axis) {
  if (xs.empty()) throw Fault("concat: no inputs");
  Tape* tape = xs[0].tape;
  const std::size_t rank = xs[0].tensor().rank();
  if (axis >= std::max<std::size_t>(rank, 1)) throw Fault("concat: axis out of range");
  std::vector<std::size_t> ids;
  ids.reserve(xs.size());
  for (const Value& v : xs) {
    if (v.tape != tape) throw Fault("concat: operands on different tapes");
    if (v.tensor().rank() != rank)
      throw Fault("concat: rank mismatch " + shape_str(xs[0].shape()) + " vs " + shape_str(v.shape()));
    ids.push_back(v.id);
  }
  Tensor out;
  std::vector<std::size_t> sizes;  // per-input extent along axis
  if (rank == 1) {
    std::size_t total = 0;
    for (const Value& v : xs) total += v.tensor().numel();
    out = Tensor({total});
    std::size_t pos = 0;
    for (const Value& v : xs) {
      const Tensor& t = v.tensor();
      sizes.push_back(t.numel());
      for (std::size_t i = 0; i < t.numel(); ++i) out.at(pos++) = t.at(i);
    }
  } else if (rank == 2 && axis == 0) {
    const std::size_t cols = xs[0].tensor().shape()[1];
    std::size_t total = 0;
    for (const Value& v : xs) {
      if (v.tensor().shape()[1] != cols)
        throw Fault("concat: shape mismatch " + shape_str(xs[0].shape()) + " vs " + shape_str(v.shape()));
      total += v.tensor().shape()[0];
    }
    out = Tensor({total, cols});
    std::size_t r = 0;
    for (const Value& v : xs) {
      const Tensor& t = v.tensor();
      sizes.push_back(t.shape()[0]);
      for (std::size_t i = 0; i < t.shape()[0]; ++i)
        for (std::size_t j = 0; j < cols; ++j) out.at(r + i, j) = t.at(i, j);
      r += t.shape()[0];
    }
  } else if (rank == 2 && axis == 1) {
    const std::size_t rows = xs[0].tensor().shape()[0];
    std::size_t total = 0;
    for (const Value& v : xs) {
      if (v.tensor().shape()[0] != rows)
        throw Fault("concat: shape mismatch " + shape_str(xs[0].shape()) + " vs " + shape_str(v.shape()));
      total += v.tensor().shape()[1];
    }
    out = Tensor({rows, total});
    std::size_t c = 0;
    for (const Value& v : xs) {
      const Tensor& t = v.tensor();
      sizes.push_back(t.shape()[1]);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < t.shape()[1]; ++j) out.at(i, c + j) = t.at(i, j);
      c += t.shape()[1];
    }
  } else {
    throw Fault("concat: unsupported rank " + std::to_string(rank));
  }
  return tape->record(std::move(out), ids,
                      [ids, sizes, rank, axis](const Tensor& g, std::vector<Tensor>& grads) {
                        if (rank == 1) {
                          std::size_t pos = 0;
                          for (std::size_t s = 0; s < ids.size(); ++s) {
                            Tensor& gx = grads[ids[s]];
                            for (std::size_t i = 0; i < sizes[s]; ++i) gx.at(i) += g.at(pos + i);
                            pos += sizes[s];
                          }
                        } else if (axis == 0) {
                          std::size_t r = 0;
                          const std::size_t cols = g.shape()[1];
                          for (std::size_t s = 0; s < ids.size(); ++s) {
                            Tensor& gx = grads[ids[s]];
                            for (std::size_t i = 0; i < sizes[s]; ++i)
                              for (std::size_t j = 0; j < cols; ++j) gx.at(i, j) += g.at(r + i, j);
                            r += sizes[s];
                          }
                        } else {
                          std::size_t c = 0;
                          const std::size_t rows = g.shape()[0];
                          for (std::size_t s = 0; s < ids.size(); ++s) {
                            Tensor& gx = grads[ids[s]];
                            for (std::size_t i = 0; i < rows; ++i)
                              for (std::size_t j = 0; j < sizes[s]; ++j) gx.at(i, j) += g.at(i, c + j);
                            c += sizes[s];
                          }
                        }
                      });
}

Value slice(Value x, std::size_t axis, std::size_t start, std::size_t len) {
  const Tensor& xt = x.tensor();
  const std::size_t rank = xt.rank();
  if (rank == 0 || axis >= rank) throw Fault("slice: axis out of range for shape " + shape_str(xt.shape()));
  if (start + len > xt.shape()[axis]) {
    throw Fault("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                ") out of bounds for shape " + shape_str(xt.shape()));
  }
  Tensor out;
  if (rank == 1) {
    out = Tensor({len});
    for (std::size_t i = 0; i < len; ++i) out.at(i) = xt.at(start + i);
  } else if (rank == 2 && axis == 0) {
    const std::size_t cols = xt.shape()[1];
    out = Tensor({len, cols});
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = xt.at(start + i, j);
  } else if (rank == 2 && axis == 1) {
    const std::size_t rows = xt.shape()[0];
    out = Tensor({rows, len});
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < len; ++j) out.at(i, j) = xt.at(i, start + j);
  } else {
    throw Fault("slice: unsupported rank " + std::to_string(rank));
  }
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid},
                        [xid, rank, axis, start, len](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          if (rank == 1) {
                            for (std::size_t i = 0; i < len; ++i) gx.at(start + i) += g.at(i);
                          } else if (axis == 0) {
                            for (std::size_t i = 0; i < len; ++i)
                              for (std::size_t j = 0; j < g.shape()[1]; ++j) gx.at(start + i, j) += g.at(i, j);
                          } else {
                            for (std::size_t i = 0; i < g.shape()[0]; ++i)
                              for (std::size_t j = 0; j < len; ++j) gx.at(i, start + j) += g.at(i, j);
                          }
                        });
}

Value reshape(Value x, std::vector<std::size_t> shape) {
  const Tensor& xt = x.tensor();
  if (Tensor::product(shape) != xt.numel()) {
    throw Fault("reshape: cannot reshape " + shape_str(xt.shape()) + " to " + shape_str(shape));
  }
  Tensor out(std::move(shape), xt.data());
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& gx = grads[xid];
    for (std::size_t i = 0; i < g.numel(); ++i) gx.at(i) += g.at(i);
  });
}

Value reduce_sum(Value x) {
  const Tensor& xt = x.tensor();
  double s = 0.0;
  for (std::size_t i = 0; i < xt.numel(); ++i) s += xt.at(i);
  std::size_t xid = x.id;
  return x.tape->record(Tensor::scalar(s), {xid}, [xid](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& gx = grads[xid];
    const double gv = g.at(0);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.at(i) += gv;
  });
}

Value reduce_mean(Value x) {
  const Tensor& xt = x.tensor();
  const std::size_t n = xt.numel();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += xt.at(i);
  const double mean = n == 0 ? 0.0 : s / static_cast<double>(n);
  std::size_t xid = x.id;
  return x.tape->record(Tensor::scalar(mean), {xid}, [xid, n](const Tensor& g, std::vector<Tensor>& grads) {
    if (n == 0) return;
    Tensor& gx = grads[xid];
    const double gv = g.at(0) / static_cast<double>(n);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx.at(i) += gv;
  });
}

namespace {

enum class Reduce { kSum, kMean, kMax, kMin };

Value reduce_axis(Value x, std::size_t axis, Reduce kind, const char* name) {
  const Tensor& xt = x.tensor();
  require_rank2(xt, name);
  if (axis > 1) throw Fault(std::string(name) + ": axis out of range");
  const std::size_t rows = xt.shape()[0], cols = xt.shape()[1];
  const std::size_t out_len = axis == 0 ? cols : rows;
  const std::size_t red_len = axis == 0 ? rows : cols;
  Tensor out({out_len});
  std::vector<std::size_t> arg(kind == Reduce::kMax || kind == Reduce::kMin ? out_len : 0);
  auto elem = [&](std::size_t o, std::size_t r) {
    return axis == 0 ? xt.at(r, o) : xt.at(o, r);
  };
  for (std::size_t o = 0; o < out_len; ++o) {
    if (kind == Reduce::kSum || kind == Reduce::kMean) {
      double s = 0.0;
      for (std::size_t r = 0; r < red_len; ++r) s += elem(o, r);
      out.at(o) = kind == Reduce::kMean ? (red_len == 0 ? 0.0 : s / static_cast<double>(red_len)) : s;
    } else {
      if (red_len == 0) throw Fault(std::string(name) + ": reduction over empty axis");
      double best = elem(o, 0);
      std::size_t bi = 0;
      for (std::size_t r = 1; r < red_len; ++r) {
        const double v = elem(o, r);
        const bool better = kind == Reduce::kMax ? v > best : v < best;
        if (better) {
          best = v;
          bi = r;
        }
      }
      out.at(o) = best;
      arg[o] = bi;
    }
  }
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid},
                        [xid, axis, kind, red_len, arg = std::move(arg)](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          const std::size_t out_len = g.numel();
                          auto acc = [&](std::size_t o, std::size_t r, double v) {
                            if (axis == 0)
                              gx.at(r, o) += v;
                            else
                              gx.at(o, r) += v;
                          };
                          for (std::size_t o = 0; o < out_len; ++o) {
                            const double gv = g.at(o);
                            switch (kind) {
                              case Reduce::kSum:
                                for (std::size_t r = 0; r < red_len; ++r) acc(o, r, gv);
                                break;
                              case Reduce::kMean:
                                for (std::size_t r = 0; r < red_len; ++r)
                                  acc(o, r, gv / static_cast<double>(red_len));
                                break;
                              case Reduce::kMax:
                              case Reduce::kMin:
                                acc(o, arg[o], gv);
                                break;
                            }
                          }
                        });
}

}  // namespace

Value reduce_sum(Value x, std::size_t axis) { return reduce_axis(x, axis, Reduce::kSum, "reduce_sum"); }
Value reduce_mean(Value x, std::size_t axis) { return reduce_axis(x, axis, Reduce::kMean, "reduce_mean"); }
Value reduce_max(Value x, std::size_t axis) { return reduce_axis(x, axis, Reduce::kMax, "reduce_max"); }
Value reduce_min(Value x, std::size_t axis) { return reduce_axis(x, axis, Reduce::kMin, "reduce_min"); }

Value sigmoid(Value x) {
  return unary_op(
      x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double v) {
        const double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 - s);
      });
}

Value tanh(Value x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double v) {
        const double t = std::tanh(v);
        return 1.0 - t * t;
      });
}

Value relu(Value x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Value selu(Value x) {
  return unary_op(
      x, "selu",
      [](double v) { return v > 0.0 ? kSeluLambda * v : kSeluLambda * kSeluAlpha * (std::exp(v) - 1.0); },
      [](double v) { return v > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(v); });
}

Value log(Value x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Value abs(Value x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Value clamp(Value x, double lo, double hi) {
  if (lo > hi) throw Fault("clamp: lo > hi");
  const Tensor& xt = x.tensor();
  Tensor out(xt.shape());
  for (std::size_t i = 0; i < xt.numel(); ++i) out.at(i) = std::min(std::max(xt.at(i), lo), hi);
  Tensor saved = xt;
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid},
                        [xid, lo, hi, saved = std::move(saved)](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          for (std::size_t i = 0; i < g.numel(); ++i)
                            if (saved.at(i) > lo && saved.at(i) < hi) gx.at(i) += g.at(i);
                        });
}

Value affine(Value x, double scale, double shift) {
  const Tensor& xt = x.tensor();
  Tensor out(xt.shape());
  for (std::size_t i = 0; i < xt.numel(); ++i) out.at(i) = scale * xt.at(i) + shift;
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid}, [xid, scale](const Tensor& g, std::vector<Tensor>& grads) {
    Tensor& gx = grads[xid];
    for (std::size_t i = 0; i < g.numel(); ++i) gx.at(i) += scale * g.at(i);
  });
}

Value stack(const std::vector<Value>& rows) {
  if (rows.empty()) throw Fault("stack: no inputs");
  Tape* tape = rows[0].tape;
  const std::size_t d = rows[0].tensor().numel();
  std::vector<std::size_t> ids;
  ids.reserve(rows.size());
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& t = rows[i].tensor();
    if (rows[i].tape != tape) throw Fault("stack: operands on different tapes");
    if (t.rank() != 1 || t.numel() != d)
      throw Fault("stack: shape mismatch " + shape_str(rows[0].shape()) + " vs " + shape_str(t.shape()));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = t.at(j);
    ids.push_back(rows[i].id);
  }
  return tape->record(std::move(out), ids, [ids, d](const Tensor& g, std::vector<Tensor>& grads) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      Tensor& gx = grads[ids[i]];
      for (std::size_t j = 0; j < d; ++j) gx.at(j) += g.at(i, j);
    }
  });
}

Value gather_rows(Value x, std::vector<long> idx) {
  const Tensor& xt = x.tensor();
  require_rank2(xt, "gather_rows");
  const std::size_t n = xt.shape()[0], d = xt.shape()[1];
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const long r = idx[i];
    if (r < 0) continue;  // zero row
    if (static_cast<std::size_t>(r) >= n)
      throw Fault("gather_rows: index " + std::to_string(r) + " out of range for shape " +
                  shape_str(xt.shape()));
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = xt.at(static_cast<std::size_t>(r), j);
  }
  std::size_t xid = x.id;
  return x.tape->record(std::move(out), {xid},
                        [xid, d, idx = std::move(idx)](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            if (idx[i] < 0) continue;
                            const auto r = static_cast<std::size_t>(idx[i]);
                            for (std::size_t j = 0; j < d; ++j) gx.at(r, j) += g.at(i, j);
                          }
                        });
}

Value add_rowvec(Value x, Value b) {
  require_same_tape(x, b, "add_rowvec");
  const Tensor& xt = x.tensor();
  const Tensor& bt = b.tensor();
  require_rank2(xt, "add_rowvec");
  if (bt.rank() != 1 || bt.numel() != xt.shape()[1]) {
    throw Fault("add_rowvec: shape mismatch " + shape_str(xt.shape()) + " vs " + shape_str(bt.shape()));
  }
  const std::size_t n = xt.shape()[0], u = xt.shape()[1];
  Tensor out({n, u});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < u; ++j) out.at(i, j) = xt.at(i, j) + bt.at(j);
  std::size_t xid = x.id, bid = b.id;
  return x.tape->record(std::move(out), {xid, bid},
                        [xid, bid, n, u](const Tensor& g, std::vector<Tensor>& grads) {
                          Tensor& gx = grads[xid];
                          Tensor& gb = grads[bid];
                          for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t j = 0; j < u; ++j) {
                              gx.at(i, j) += g.at(i, j);
                              gb.at(j) += g.at(i, j);
                            }
                        });
}

namespace {

Value segment_reduce(Value x, std::vector<std::size_t> offsets, Reduce kind, const char* name) {
  const Tensor& xt = x.tensor();
  require_rank2(xt, name);
  const std::size_t d = xt.shape()[1];
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != xt.shape()[0] ||
      !std::is_sorted(offsets.begin(), offsets.end())) {
    throw Fault(std::string(name) + ": invalid segment offsets");
  }
  const std::size_t n_seg = offsets.size() - 1;
  Tensor out({n_seg, d});
  std::vector<std::size_t> arg(kind == Reduce::kMax || kind == Reduce::kMin ? n_seg * d : 0);
  for (std::size_t s = 0; s < n_seg; ++s) {
    const std::size_t beg = offsets[s], end = offsets[s + 1];
    if (kind == Reduce::kSum || kind == Reduce::kMean) {
      for (std::size_t r = beg; r < end; ++r)
        for (std::size_t j = 0; j < d; ++j) out.at(s, j) += xt.at(r, j);
      if (kind == Reduce::kMean && end > beg) {
        const double inv = 1.0 / static_cast<double>(end - beg);
        for (std::size_t j = 0; j < d; ++j) out.at(s, j) *= inv;
      }
    } else {
      if (end == beg) throw Fault(std::string(name) + ": empty segment " + std::to_string(s));
      for (std::size_t j = 0; j < d; ++j) {
        double best = xt.at(beg, j);
        std::size_t bi = beg;
        for (std::size_t r = beg + 1; r < end; ++r) {
          const double v = xt.at(r, j);
          const bool better = kind == Reduce::kMax ? v > best : v < best;
          if (better) {
            best = v;
            bi = r;
          }
        }
        out.at(s, j) = best;
        arg[s * d + j] = bi;
      }
    }
  }
  std::size_t xid = x.id;
  return x.tape->record(
      std::move(out), {xid},
      [xid, d, kind, offsets = std::move(offsets), arg = std::move(arg)](const Tensor& g,
                                                                         std::vector<Tensor>& grads) {
        Tensor& gx = grads[xid];
        const std::size_t n_seg = offsets.size() - 1;
        for (std::size_t s = 0; s < n_seg; ++s) {
          const std::size_t beg = offsets[s], end = offsets[s + 1];
          switch (kind) {
            case Reduce::kSum:
              for (std::size_t r = beg; r < end; ++r)
                for (std::size_t j = 0; j < d; ++j) gx.at(r, j) += g.at(s, j);
              break;
            case Reduce::kMean: {
              if (end == beg) break;
              const double inv = 1.0 / static_cast<double>(end - beg);
              for (std::size_t r = beg; r < end; ++r)
                for (std::size_t j = 0; j < d; ++j) gx.at(r, j) += g.at(s, j) * inv;
              break;
            }
            case Reduce::kMax:
            case Reduce::kMin:
              for (std::size_t j = 0; j < d; ++j) gx.at(arg[s * d + j], j) += g.at(s, j);
              break;
          }
        }
      });
}

}  // namespace

Value segment_sum(Value x, std::vector<std::size_t> offsets) {
  return segment_reduce(x, std::move(offsets), Reduce::kSum, "segment_sum");
}
Value segment_mean(Value x, std::vector<std::size_t> offsets) {
  return segment_reduce(x, std::move(offsets), Reduce::kMean, "segment_mean");
}
Value segment_max(Value x, std::vector<std::size_t> offsets) {
  return segment_reduce(x, std::move(offsets), Reduce::kMax, "segment_max");
}
Value segment_min(Value x, std::vector<std::size_t> offsets) {
  return segment_reduce(x, std::move(offsets), Reduce::kMin, "segment_min");
}

double gradient_check(const std::function<Value(Tape&, const std::vector<Value>&)>& f,
                      const std::vector<Tensor>& points, double epsilon) {
  if (epsilon <= 0.0) throw Fault("gradient_check: epsilon must be > 0");
  auto eval = [&](const std::vector<Tensor>& pts) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(pts.size());
    for (const Tensor& p : pts) leaves.push_back(tape.leaf(p));
    Value y = f(tape, leaves);
    if (y.tensor().numel() != 1)
      throw Fault("gradient_check: f must produce a scalar, got shape " + shape_str(y.shape()));
    return std::pair<Tape, Value>(std::move(tape), y);
  };

  auto [tape, y] = eval(points);
  {
    auto [tape2, y2] = eval(points);
    if (tape2.value(y2.id).at(0) != tape.value(y.id).at(0)) {
      throw Fault("gradient_check: f is non-deterministic across probe evaluations");
    }
  }
  // backward() only keeps node ids valid inside `tape`; re-bind the loss handle.
  Value loss{&tape, y.id};
  Gradients grads = tape.backward(loss);

  double max_rel = 0.0;
  std::vector<Tensor> probe = points;
  for (std::size_t p = 0; p < points.size(); ++p) {
    // leaves were created first, in order, so leaf p has node id p
    const Tensor& analytic = grads.at(p);
    for (std::size_t i = 0; i < points[p].numel(); ++i) {
      const double orig = probe[p].at(i);
      probe[p].at(i) = orig + epsilon;
      auto [tp, yp] = eval(probe);
      const double fp = tp.value(yp.id).at(0);
      probe[p].at(i) = orig - epsilon;
      auto [tm, ym] = eval(probe);
      const double fm = tm.value(ym.id).at(0);
      probe[p].at(i) = orig;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic.at(i);
      const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

double gradient_check(const std::function<Value(Tape&, Value)>& f, const Tensor& point,
                      double epsilon) {
  return gradient_check(
      [&f](Tape& t, const std::vector<Value>& xs) { return f(t, xs[0]); }, {point}, epsilon);
}

}  // namespace msmpc::ad
