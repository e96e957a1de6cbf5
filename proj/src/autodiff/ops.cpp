#include "dsam/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace dsam::ad {
namespace {

Graph& same_graph(Var a, Var b) {
  if (&a.graph() != &b.graph()) throw std::invalid_argument("operands belong to different graphs");
  return a.graph();
}

template <typename F>
void accumulate(Graph& g, NodeId id, F&& f) {
  if (!g.requires_grad(id)) return;
  f(g.grad_buffer(id));
}

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() > 2) throw std::invalid_argument(std::string(op) + ": rank > 2 not supported");
}

enum class Broadcast { kSame, kColumn };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  require_2d(a, op);
  require_2d(b, op);
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kColumn;
  throw std::invalid_argument(std::string(op) + ": incompatible shapes " + to_string(a.shape()) + " and " +
                              to_string(b.shape()));
}

// Reduces a gradient shaped like `a` to the shape of broadcast operand `b`.
void reduce_into(Tensor& b_grad, const Tensor& full, Broadcast mode, double factor = 1.0) {
  if (mode == Broadcast::kSame) {
    for (std::size_t i = 0; i < full.size(); ++i) b_grad[i] += factor * full[i];
    return;
  }
  const std::size_t rows = full.rows(), cols = full.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += full[r * cols + c];
    b_grad[r] += factor * s;
  }
}

inline double b_at(const Tensor& b, Broadcast mode, std::size_t i, std::size_t cols) {
  return mode == Broadcast::kSame ? b[i] : b[i / cols];
}

double mask_total(const Tensor& mask) {
  double s = 0.0;
  for (double m : mask.values()) s += m;
  return s;
}

void check_mask(const Tensor& pred, const Tensor& target, const Tensor& mask, const char* op) {
  if (target.size() != pred.size() || mask.size() != pred.size()) {
    throw std::invalid_argument(std::string(op) + ": pred/target/mask sizes differ (" +
                                std::to_string(pred.size()) + ", " + std::to_string(target.size()) + ", " +
                                std::to_string(mask.size()) + ")");
  }
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_2d(A, "matmul");
  require_2d(B, "matmul");
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  if (B.rows() != k) {
    throw std::invalid_argument("matmul: inner dimensions differ " + to_string(A.shape()) + " x " +
                                to_string(B.shape()));
  }
  Tensor C(B.rank() == 2 ? Shape{m, n} : Shape{m});
  const NodeId ia = a.id(), ib = b.id();
  if (n == 1) {
    // Matrix-vector product: row dot products forward, outer product and
    // transposed product backward.
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = &A[i * k];
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * B[p];
      C[i] = s;
    }
    return g.record("matmul", std::move(C), {ia, ib}, [ia, ib, m, k](Graph& g, NodeId self) {
      const Tensor& dC = g.upstream(self);
      const Tensor& A = g.value(ia);
      const Tensor& B = g.value(ib);
      accumulate(g, ia, [&](Tensor& dA) {
        for (std::size_t i = 0; i < m; ++i) {
          const double d = dC[i];
          if (d == 0.0) continue;
          double* darow = &dA[i * k];
          for (std::size_t p = 0; p < k; ++p) darow[p] += d * B[p];
        }
      });
      accumulate(g, ib, [&](Tensor& dB) {
        for (std::size_t i = 0; i < m; ++i) {
          const double d = dC[i];
          if (d == 0.0) continue;
          const double* arow = &A[i * k];
          for (std::size_t p = 0; p < k; ++p) dB[p] += d * arow[p];
        }
      });
    });
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = &C[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = &B[p * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return g.record("matmul", std::move(C), {ia, ib}, [ia, ib, m, k, n](Graph& g, NodeId self) {
    const Tensor& dC = g.upstream(self);
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    accumulate(g, ia, [&](Tensor& dA) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = &dC[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &B[p * n];
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
          dA[i * k + p] += s;
        }
      }
    });
    accumulate(g, ib, [&](Tensor& dB) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* dcrow = &dC[i * n];
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          double* dbrow = &dB[p * n];
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
        }
      }
    });
  });
}

Var add(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = broadcast_mode(A, B, "add");
  const std::size_t cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + b_at(B, mode, i, cols);
  const NodeId ia = a.id(), ib = b.id();
  return g.record("add", std::move(out), {ia, ib}, [ia, ib, mode](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ia, [&](Tensor& d) { d.add_inplace(up); });
    accumulate(g, ib, [&](Tensor& d) { reduce_into(d, up, mode); });
  });
}

Var sub(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = broadcast_mode(A, B, "sub");
  const std::size_t cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - b_at(B, mode, i, cols);
  const NodeId ia = a.id(), ib = b.id();
  return g.record("sub", std::move(out), {ia, ib}, [ia, ib, mode](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ia, [&](Tensor& d) { d.add_inplace(up); });
    accumulate(g, ib, [&](Tensor& d) { reduce_into(d, up, mode, -1.0); });
  });
}

Var mul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = broadcast_mode(A, B, "mul");
  const std::size_t cols = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] * b_at(B, mode, i, cols);
  const NodeId ia = a.id(), ib = b.id();
  return g.record("mul", std::move(out), {ia, ib}, [ia, ib, mode, cols](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    const Tensor& A = g.value(ia);
    const Tensor& B = g.value(ib);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] += up[i] * b_at(B, mode, i, cols);
    });
    accumulate(g, ib, [&](Tensor& d) {
      Tensor prod(A.shape());
      for (std::size_t i = 0; i < up.size(); ++i) prod[i] = up[i] * A[i];
      reduce_into(d, prod, mode);
    });
  });
}

Var scale(Var a, double factor) {
  Graph& g = a.graph();
  Tensor out = a.value();
  for (auto& v : out.values()) v *= factor;
  const NodeId ia = a.id();
  return g.record("scale", std::move(out), {ia}, [ia, factor](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] += factor * up[i];
    });
  });
}

Var tanh(Var a) {
  Graph& g = a.graph();
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::tanh(v);
  const NodeId ia = a.id();
  return g.record("tanh", std::move(out), {ia}, [ia](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] += up[i] * (1.0 - y[i] * y[i]);
    });
  });
}

Var sigmoid(Var a) {
  Graph& g = a.graph();
  Tensor out = a.value();
  for (auto& v : out.values()) {
    v = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  const NodeId ia = a.id();
  return g.record("sigmoid", std::move(out), {ia}, [ia](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    const Tensor& y = g.value(self);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] += up[i] * y[i] * (1.0 - y[i]);
    });
  });
}

Var abs(Var a) {
  Graph& g = a.graph();
  Tensor out = a.value();
  for (auto& v : out.values()) v = std::fabs(v);
  const NodeId ia = a.id();
  return g.record("abs", std::move(out), {ia}, [ia](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    const Tensor& x = g.value(ia);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] += up[i] * (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0));
    });
  });
}

Var softmax(Var a, std::size_t axis) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  require_2d(x, "softmax");
  if (axis > 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  const std::size_t rows = x.rows(), cols = x.cols();
  // Groups are columns (axis 0) or rows (axis 1).
  const std::size_t groups = axis == 0 ? cols : rows;
  const std::size_t extent = axis == 0 ? rows : cols;
  const std::size_t stride = axis == 0 ? cols : 1;
  const std::size_t group_step = axis == 0 ? 1 : cols;
  Tensor y(x.shape());
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t base = gi * group_step;
    double mx = x[base];
    for (std::size_t e = 1; e < extent; ++e) mx = std::max(mx, x[base + e * stride]);
    double z = 0.0;
    for (std::size_t e = 0; e < extent; ++e) {
      const double v = std::exp(x[base + e * stride] - mx);
      y[base + e * stride] = v;
      z += v;
    }
    for (std::size_t e = 0; e < extent; ++e) y[base + e * stride] /= z;
  }
  const NodeId ia = a.id();
  return g.record("softmax", std::move(y), {ia},
                  [ia, groups, extent, stride, group_step](Graph& g, NodeId self) {
                    const Tensor& up = g.upstream(self);
                    const Tensor& y = g.value(self);
                    accumulate(g, ia, [&](Tensor& d) {
                      for (std::size_t gi = 0; gi < groups; ++gi) {
                        const std::size_t base = gi * group_step;
                        double dot = 0.0;
                        for (std::size_t e = 0; e < extent; ++e) {
                          dot += up[base + e * stride] * y[base + e * stride];
                        }
                        for (std::size_t e = 0; e < extent; ++e) {
                          const std::size_t i = base + e * stride;
                          d[i] += y[i] * (up[i] - dot);
                        }
                      }
                    });
                  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  Graph& g = parts.front().graph();
  bool all_vectors = true;
  std::size_t total = 0;
  const std::size_t fixed = axis == 0 ? parts.front().value().cols() : parts.front().value().rows();
  std::vector<NodeId> ids;
  std::vector<std::size_t> extents;
  for (const Var& p : parts) {
    if (&p.graph() != &g) throw std::invalid_argument("concat: operands belong to different graphs");
    const Tensor& t = p.value();
    require_2d(t, "concat");
    all_vectors = all_vectors && t.rank() <= 1;
    const std::size_t other = axis == 0 ? t.cols() : t.rows();
    if (other != fixed) {
      throw std::invalid_argument("concat: mismatched extent " + to_string(t.shape()) + " along axis " +
                                  std::to_string(1 - axis));
    }
    const std::size_t e = axis == 0 ? t.rows() : t.cols();
    extents.push_back(e);
    total += e;
    ids.push_back(p.id());
  }
  Shape shape;
  if (axis == 0) {
    shape = all_vectors ? Shape{total} : Shape{total, fixed};
  } else {
    shape = Shape{fixed, total};
  }
  Tensor out(shape);
  const std::size_t out_cols = out.cols();
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& t = parts[k].value();
    const std::size_t tr = t.rows(), tc = t.cols();
    for (std::size_t r = 0; r < tr; ++r) {
      for (std::size_t c = 0; c < tc; ++c) {
        const std::size_t orow = axis == 0 ? r + offset : r;
        const std::size_t ocol = axis == 0 ? c : c + offset;
        out[orow * out_cols + ocol] = t[r * tc + c];
      }
    }
    offset += extents[k];
  }
  return g.record("concat", std::move(out), ids, [ids, extents, axis](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    const std::size_t out_cols = up.cols();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      accumulate(g, ids[k], [&](Tensor& d) {
        const std::size_t tr = d.rows(), tc = d.cols();
        for (std::size_t r = 0; r < tr; ++r) {
          for (std::size_t c = 0; c < tc; ++c) {
            const std::size_t orow = axis == 0 ? r + offset : r;
            const std::size_t ocol = axis == 0 ? c : c + offset;
            d[r * tc + c] += up[orow * out_cols + ocol];
          }
        }
      });
      offset += extents[k];
    }
  });
}

Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t length) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  require_2d(x, "slice");
  if (axis > 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  const std::size_t rows = x.rows(), cols = x.cols();
  const std::size_t extent = axis == 0 ? rows : cols;
  if (length == 0 || begin + length > extent) {
    throw std::invalid_argument("slice: range [" + std::to_string(begin) + ", " + std::to_string(begin + length) +
                                ") outside extent " + std::to_string(extent));
  }
  Shape shape;
  if (axis == 0) {
    shape = x.rank() <= 1 ? Shape{length} : Shape{length, cols};
  } else {
    shape = Shape{rows, length};
  }
  Tensor out(shape);
  const std::size_t oc = axis == 0 ? cols : length;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < oc; ++c) {
      const std::size_t sr = axis == 0 ? r + begin : r;
      const std::size_t sc = axis == 0 ? c : c + begin;
      out[r * oc + c] = x[sr * cols + sc];
    }
  }
  const NodeId ia = a.id();
  return g.record("slice", std::move(out), {ia}, [ia, axis, begin, cols, oc](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ia, [&](Tensor& d) {
      const std::size_t orows = up.size() / oc;
      for (std::size_t r = 0; r < orows; ++r) {
        for (std::size_t c = 0; c < oc; ++c) {
          const std::size_t sr = axis == 0 ? r + begin : r;
          const std::size_t sc = axis == 0 ? c : c + begin;
          d[sr * cols + sc] += up[r * oc + c];
        }
      }
    });
  });
}

std::vector<Var> split(Var a, std::size_t axis, std::span<const std::size_t> sizes) {
  std::vector<Var> out;
  std::size_t begin = 0;
  for (std::size_t s : sizes) {
    out.push_back(slice(a, axis, begin, s));
    begin += s;
  }
  const std::size_t extent = axis == 0 ? a.value().rows() : a.value().cols();
  if (begin != extent) {
    throw std::invalid_argument("split: sizes sum to " + std::to_string(begin) + " but extent is " +
                                std::to_string(extent));
  }
  return out;
}

Var reshape(Var a, Shape shape) {
  return flat_slice(a, 0, std::move(shape));
}

Var flat_slice(Var a, std::size_t begin, Shape shape) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  const std::size_t n = element_count(shape);
  if (begin + n > x.size()) {
    throw std::invalid_argument("flat_slice: range exceeds tensor of " + std::to_string(x.size()) + " values");
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(begin),
                                                   x.data().begin() + static_cast<std::ptrdiff_t>(begin + n)));
  const NodeId ia = a.id();
  return g.record("flat_slice", std::move(out), {ia}, [ia, begin](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[begin + i] += up[i];
    });
  });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t dilation) {
  Graph& g = same_graph(x, weight);
  same_graph(x, bias);
  if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("conv1d: kernel width must be odd");
  if (dilation == 0) throw std::invalid_argument("conv1d: dilation must be positive");
  const Tensor& X = x.value();
  const Tensor& W = weight.value();
  const Tensor& B = bias.value();
  require_2d(X, "conv1d");
  const std::size_t in = X.rows(), len = X.cols();
  const std::size_t out_ch = W.rows();
  if (W.rank() != 2 || W.cols() != in * kernel) {
    throw std::invalid_argument("conv1d: weight shape " + to_string(W.shape()) + " incompatible with input " +
                                to_string(X.shape()) + " and kernel " + std::to_string(kernel));
  }
  if (B.size() != out_ch) throw std::invalid_argument("conv1d: bias size mismatch");

  const long half = static_cast<long>(kernel / 2);
  // Column buffer [in * kernel, len] with zero padding.
  auto columns = std::make_shared<std::vector<double>>(in * kernel * len, 0.0);
  for (std::size_t c = 0; c < in; ++c) {
    for (std::size_t k = 0; k < kernel; ++k) {
      const long shift = (static_cast<long>(k) - half) * static_cast<long>(dilation);
      double* row = &(*columns)[(c * kernel + k) * len];
      for (std::size_t t = 0; t < len; ++t) {
        const long src = static_cast<long>(t) + shift;
        if (src >= 0 && src < static_cast<long>(len)) row[t] = X[c * len + static_cast<std::size_t>(src)];
      }
    }
  }
  const std::size_t depth = in * kernel;
  Tensor Y(Shape{out_ch, len});
  for (std::size_t o = 0; o < out_ch; ++o) {
    double* yrow = &Y[o * len];
    for (std::size_t t = 0; t < len; ++t) yrow[t] = B[o];
    for (std::size_t p = 0; p < depth; ++p) {
      const double w = W[o * depth + p];
      const double* crow = &(*columns)[p * len];
      for (std::size_t t = 0; t < len; ++t) yrow[t] += w * crow[t];
    }
  }
  const NodeId ix = x.id(), iw = weight.id(), ib = bias.id();
  return g.record("conv1d", std::move(Y), {ix, iw, ib},
                  [ix, iw, ib, columns, in, len, out_ch, kernel, dilation, half, depth](Graph& g, NodeId self) {
                    const Tensor& dY = g.upstream(self);
                    const Tensor& W = g.value(iw);
                    accumulate(g, ib, [&](Tensor& dB) {
                      for (std::size_t o = 0; o < out_ch; ++o) {
                        double s = 0.0;
                        for (std::size_t t = 0; t < len; ++t) s += dY[o * len + t];
                        dB[o] += s;
                      }
                    });
                    accumulate(g, iw, [&](Tensor& dW) {
                      for (std::size_t o = 0; o < out_ch; ++o) {
                        const double* dyrow = &dY[o * len];
                        for (std::size_t p = 0; p < depth; ++p) {
                          const double* crow = &(*columns)[p * len];
                          double s = 0.0;
                          for (std::size_t t = 0; t < len; ++t) s += dyrow[t] * crow[t];
                          dW[o * depth + p] += s;
                        }
                      }
                    });
                    accumulate(g, ix, [&](Tensor& dX) {
                      std::vector<double> dcol(depth * len, 0.0);
                      for (std::size_t o = 0; o < out_ch; ++o) {
                        const double* dyrow = &dY[o * len];
                        for (std::size_t p = 0; p < depth; ++p) {
                          const double w = W[o * depth + p];
                          double* drow = &dcol[p * len];
                          for (std::size_t t = 0; t < len; ++t) drow[t] += w * dyrow[t];
                        }
                      }
                      for (std::size_t c = 0; c < in; ++c) {
                        for (std::size_t k = 0; k < kernel; ++k) {
                          const long shift = (static_cast<long>(k) - half) * static_cast<long>(dilation);
                          const double* drow = &dcol[(c * kernel + k) * len];
                          for (std::size_t t = 0; t < len; ++t) {
                            const long src = static_cast<long>(t) + shift;
                            if (src >= 0 && src < static_cast<long>(len)) {
                              dX[c * len + static_cast<std::size_t>(src)] += drow[t];
                            }
                          }
                        }
                      }
                    });
                  });
}

Var embedding(Var table, std::span<const std::size_t> ids) {
  Graph& g = table.graph();
  const Tensor& T = table.value();
  if (T.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
  if (ids.empty()) throw std::invalid_argument("embedding: empty id list");
  const std::size_t vocab = T.rows(), dim = T.cols(), n = ids.size();
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  Tensor out(Shape{dim, n});
  for (std::size_t j = 0; j < n; ++j) {
    if (idx[j] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(idx[j]) + " outside vocabulary of " +
                              std::to_string(vocab));
    }
    for (std::size_t e = 0; e < dim; ++e) out[e * n + j] = T[idx[j] * dim + e];
  }
  const NodeId it = table.id();
  return g.record("embedding", std::move(out), {it}, [it, idx, dim, n](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, it, [&](Tensor& d) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t e = 0; e < dim; ++e) d[idx[j] * dim + e] += up[e * n + j];
      }
    });
  });
}

LstmState lstm_step(Var x, const LstmState& state, Var weight, Var bias) {
  const std::size_t hidden = state.h.value().size();
  if (weight.value().rows() != 4 * hidden) {
    throw std::invalid_argument("lstm_step: weight rows " + std::to_string(weight.value().rows()) +
                                " != 4 * hidden " + std::to_string(hidden));
  }
  const Var inputs[] = {x, state.h};
  Var z = add(matmul(weight, concat(inputs, 0)), bias);
  const std::size_t sizes[] = {hidden, hidden, hidden, hidden};
  auto gates = split(z, 0, sizes);
  Var i = sigmoid(gates[0]);
  Var f = sigmoid(gates[1]);
  Var cand = tanh(gates[2]);
  Var o = sigmoid(gates[3]);
  Var c = add(mul(f, state.c), mul(i, cand));
  Var h = mul(o, tanh(c));
  return {h, c};
}

Var linear(Var weight, Var x, Var bias) { return add(matmul(weight, x), bias); }

Var sum(Var a) {
  Graph& g = a.graph();
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  const NodeId ia = a.id();
  return g.record("sum", Tensor::scalar(s), {ia}, [ia](Graph& g, NodeId self) {
    const double up = g.upstream(self)[0];
    accumulate(g, ia, [&](Tensor& d) {
      for (auto& v : d.values()) v += up;
    });
  });
}

Var masked_sum(Var a, const Tensor& mask) {
  Graph& g = a.graph();
  const Tensor& x = a.value();
  if (mask.size() != x.size()) throw std::invalid_argument("masked_sum: mask size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += mask[i] * x[i];
  const NodeId ia = a.id();
  return g.record("masked_sum", Tensor::scalar(s), {ia}, [ia, mask](Graph& g, NodeId self) {
    const double up = g.upstream(self)[0];
    accumulate(g, ia, [&](Tensor& d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up * mask[i];
    });
  });
}

Var mse(Var pred, const Tensor& target, const Tensor& mask, double normalizer) {
  Graph& g = pred.graph();
  const Tensor& p = pred.value();
  check_mask(p, target, mask, "mse");
  const double denom = normalizer > 0.0 ? normalizer : mask_total(mask);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double diff = p[i] - target[i];
    s += mask[i] * diff * diff;
  }
  const double value = denom > 0.0 ? s / denom : 0.0;
  const NodeId ip = pred.id();
  return g.record("mse", Tensor::scalar(value), {ip}, [ip, target, mask, denom](Graph& g, NodeId self) {
    if (denom <= 0.0) return;
    const double up = g.upstream(self)[0];
    const Tensor& p = g.value(ip);
    accumulate(g, ip, [&](Tensor& d) {
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += up * 2.0 * mask[i] * (p[i] - target[i]) / denom;
    });
  });
}

Var bce(Var prob, const Tensor& target, const Tensor& mask, double normalizer) {
  Graph& g = prob.graph();
  const Tensor& p = prob.value();
  check_mask(p, target, mask, "bce");
  const double denom = normalizer > 0.0 ? normalizer : mask_total(mask);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (mask[i] == 0.0) continue;
    const double q = std::clamp(p[i], kProbFloor, 1.0 - kProbFloor);
    s -= mask[i] * (target[i] * std::log(q) + (1.0 - target[i]) * std::log(1.0 - q));
  }
  const double value = denom > 0.0 ? s / denom : 0.0;
  const NodeId ip = prob.id();
  return g.record("bce", Tensor::scalar(value), {ip}, [ip, target, mask, denom](Graph& g, NodeId self) {
    if (denom <= 0.0) return;
    const double up = g.upstream(self)[0];
    const Tensor& p = g.value(ip);
    accumulate(g, ip, [&](Tensor& d) {
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (mask[i] == 0.0 || p[i] < kProbFloor || p[i] > 1.0 - kProbFloor) continue;
        d[i] += up * mask[i] * (p[i] - target[i]) / (p[i] * (1.0 - p[i])) / denom;
      }
    });
  });
}

Var cross_entropy_logits(Var logits, std::span<const std::size_t> labels, std::span<const double> column_mask,
                         double normalizer) {
  Graph& g = logits.graph();
  const Tensor& z = logits.value();
  require_2d(z, "cross_entropy_logits");
  const std::size_t classes = z.rows(), n = z.cols();
  if (labels.size() != n) throw std::invalid_argument("cross_entropy_logits: label count != column count");
  if (!column_mask.empty() && column_mask.size() != n) {
    throw std::invalid_argument("cross_entropy_logits: mask length != column count");
  }
  std::vector<double> mask(n, 1.0);
  if (!column_mask.empty()) mask.assign(column_mask.begin(), column_mask.end());
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  double denom = normalizer;
  if (denom <= 0.0) {
    denom = 0.0;
    for (double m : mask) denom += m;
  }
  auto probs = std::make_shared<std::vector<double>>(classes * n);
  double s = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (lab[j] >= classes) throw std::out_of_range("cross_entropy_logits: label out of range");
    double mx = z[j];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, z[c * n + j]);
    double zsum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) zsum += std::exp(z[c * n + j] - mx);
    const double lse = mx + std::log(zsum);
    for (std::size_t c = 0; c < classes; ++c) (*probs)[c * n + j] = std::exp(z[c * n + j] - lse);
    s += mask[j] * (lse - z[lab[j] * n + j]);
  }
  const double value = denom > 0.0 ? s / denom : 0.0;
  const NodeId iz = logits.id();
  return g.record("cross_entropy_logits", Tensor::scalar(value), {iz},
                  [iz, lab, mask, probs, classes, n, denom](Graph& g, NodeId self) {
                    if (denom <= 0.0) return;
                    const double up = g.upstream(self)[0];
                    accumulate(g, iz, [&](Tensor& d) {
                      for (std::size_t j = 0; j < n; ++j) {
                        if (mask[j] == 0.0) continue;
                        const double w = up * mask[j] / denom;
                        for (std::size_t c = 0; c < classes; ++c) {
                          d[c * n + j] += w * ((*probs)[c * n + j] - (c == lab[j] ? 1.0 : 0.0));
                        }
                      }
                    });
                  });
}

Var gradient_reverse(Var x, double scale) {
  if (!(scale >= 0.0)) throw std::invalid_argument("gradient_reverse: scale must be nonnegative");
  Graph& g = x.graph();
  const NodeId ix = x.id();
  return g.record("gradient_reverse", x.value(), {ix}, [ix, scale](Graph& g, NodeId self) {
    const Tensor& up = g.upstream(self);
    accumulate(g, ix, [&](Tensor& d) {
      for (std::size_t i = 0; i < up.size(); ++i) d[i] -= scale * up[i];
    });
  });
}

}  // namespace dsam::ad
