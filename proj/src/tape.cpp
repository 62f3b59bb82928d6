#include "mphil/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mphil {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

Tensor matmul_value(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double ail = pa[i * k + l];
      const double* brow = pb + l * n;
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
    }
  }
  return c;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  check_finite(value, "leaf");
  value.requires_grad = requires_grad;
  value.grad.clear();
  nodes_.push_back(Node{std::move(value), nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> backward,
               const char* op) {
  check_finite(value, op);
  value.requires_grad = requires_grad;
  nodes_.push_back(Node{std::move(value), requires_grad ? std::move(backward) : nullptr});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::vector<double>& Tape::grad_buf(Var v) {
  Tensor& t = nodes_[v.id].tensor;
  t.ensure_grad();
  return t.grad;
}

Tensor Tape::grad(Var v) const {
  const Tensor& t = nodes_[v.id].tensor;
  Tensor g(t.rows(), t.cols());
  if (!t.grad.empty()) {
    std::copy(t.grad.begin(), t.grad.end(), g.data());
  }
  return g;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.cols() == tb.rows(), "matmul: inner dimensions disagree: " + ta.shape_str() +
                                      " vs " + tb.shape_str());
  Tensor out = matmul_value(ta, tb);
  const bool rg = wants_grad(a) || wants_grad(b);
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), rg,
              [a, b, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const Tensor& ta = t.value(a);
                const Tensor& tb = t.value(b);
                const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);  // dA[i,l] += sum_j g[i,j] * B[l,j]
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                      double acc = 0.0;
                      for (std::size_t j = 0; j < n; ++j)
                        acc += g[i * n + j] * tb.data()[l * n + j];
                      da[i * k + l] += acc;
                    }
                }
                if (t.wants_grad(b)) {
                  auto& db = t.grad_buf(b);  // dB[l,j] += sum_i A[i,l] * g[i,j]
                  for (std::size_t l = 0; l < k; ++l)
                    for (std::size_t i = 0; i < m; ++i) {
                      const double ail = ta.data()[i * k + l];
                      for (std::size_t j = 0; j < n; ++j)
                        db[l * n + j] += ail * g[i * n + j];
                    }
                }
              },
              "matmul");
}

Var Tape::transpose(Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.cols(), tx.rows());
  for (std::size_t i = 0; i < tx.rows(); ++i)
    for (std::size_t j = 0; j < tx.cols(); ++j) out.at(j, i) = tx.at(i, j);
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& tx = t.value(x);
                auto& dx = t.grad_buf(x);
                const std::size_t r = tx.rows(), c = tx.cols();
                for (std::size_t i = 0; i < r; ++i)
                  for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += g[j * r + i];
              },
              "transpose");
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb),
          "add: shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] + tb.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(a) || wants_grad(b),
              [a, b, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (t.wants_grad(b)) {
                  auto& db = t.grad_buf(b);
                  for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
                }
              },
              "add");
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb),
          "sub: shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] - tb.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(a) || wants_grad(b),
              [a, b, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (t.wants_grad(b)) {
                  auto& db = t.grad_buf(b);
                  for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
                }
              },
              "sub");
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(ta.same_shape(tb),
          "mul: shape mismatch: " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.size(); ++i) out.data()[i] = ta.data()[i] * tb.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(a) || wants_grad(b),
              [a, b, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const Tensor& ta = t.value(a);
                const Tensor& tb = t.value(b);
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * tb.data()[i];
                }
                if (t.wants_grad(b)) {
                  auto& db = t.grad_buf(b);
                  for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ta.data()[i];
                }
              },
              "mul");
}

Var Tape::add_rowvec(Var a, Var bias) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(bias);
  require(tb.rows() == 1 && tb.cols() == ta.cols(),
          "add_rowvec: bias must be [1x" + std::to_string(ta.cols()) + "], got " +
              tb.shape_str() + " for " + ta.shape_str());
  Tensor out(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = 0; j < ta.cols(); ++j)
      out.at(i, j) = ta.at(i, j) + tb.data()[j];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(a) || wants_grad(bias),
              [a, bias, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const Tensor& ta = t.value(a);
                const std::size_t m = ta.rows(), n = ta.cols();
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);
                  for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                }
                if (t.wants_grad(bias)) {
                  auto& db = t.grad_buf(bias);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                }
              },
              "add_rowvec");
}

Var Tape::div_colvec(Var a, Var b) {
  const Tensor& ta = value(a);
  const Tensor& tb = value(b);
  require(tb.cols() == 1 && tb.rows() == ta.rows(),
          "div_colvec: divisor must be [" + std::to_string(ta.rows()) + "x1], got " +
              tb.shape_str() + " for " + ta.shape_str());
  Tensor out(ta.rows(), ta.cols());
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    const double d = tb.data()[i];
    for (std::size_t j = 0; j < ta.cols(); ++j) out.at(i, j) = ta.at(i, j) / d;
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(a) || wants_grad(b),
              [a, b, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const Tensor& ta = t.value(a);
                const Tensor& tb = t.value(b);
                const std::size_t m = ta.rows(), n = ta.cols();
                if (t.wants_grad(a)) {
                  auto& da = t.grad_buf(a);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      da[i * n + j] += g[i * n + j] / tb.data()[i];
                }
                if (t.wants_grad(b)) {
                  auto& db = t.grad_buf(b);
                  for (std::size_t i = 0; i < m; ++i) {
                    const double d = tb.data()[i];
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j)
                      acc += g[i * n + j] * (-ta.data()[i * n + j] / (d * d));
                    db[i] += acc;
                  }
                }
              },
              "div_colvec");
}

Var Tape::scalar_mul(Var s, Var x) {
  const Tensor& ts = value(s);
  const Tensor& tx = value(x);
  require(ts.is_scalar(), "scalar_mul: multiplier must be [1x1], got " + ts.shape_str());
  const double sv = ts.data()[0];
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.size(); ++i) out.data()[i] = sv * tx.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(s) || wants_grad(x),
              [s, x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const Tensor& tx = t.value(x);
                const double sv = t.value(s).data()[0];
                if (t.wants_grad(s)) {
                  double acc = 0.0;
                  for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * tx.data()[i];
                  t.grad_buf(s)[0] += acc;
                }
                if (t.wants_grad(x)) {
                  auto& dx = t.grad_buf(x);
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += sv * g[i];
                }
              },
              "scalar_mul");
}

Var Tape::scale(Var x, double factor) {
  const Tensor& tx = value(x);
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.size(); ++i) out.data()[i] = factor * tx.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, factor, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                auto& dx = t.grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
              },
              "scale");
}

Var Tape::add_const(Var x, double value_shift) {
  const Tensor& tx = value(x);
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.size(); ++i) out.data()[i] = tx.data()[i] + value_shift;
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                auto& dx = t.grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
              },
              "add_const");
}

Var Tape::clamp_min(Var x, double floor) {
  const Tensor& tx = value(x);
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.size(); ++i)
    out.data()[i] = tx.data()[i] > floor ? tx.data()[i] : floor;
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, floor, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& tx = t.value(x);
                auto& dx = t.grad_buf(x);
                for (std::size_t i = 0; i < g.size(); ++i)
                  if (tx.data()[i] > floor) dx[i] += g[i];
              },
              "clamp_min");
}

Var Tape::apply_unary(UnaryKind kind, Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.rows(), tx.cols());
  switch (kind) {
    case UnaryKind::sigmoid:
      for (std::size_t i = 0; i < tx.size(); ++i)
        out.data()[i] = 1.0 / (1.0 + std::exp(-tx.data()[i]));
      break;
    case UnaryKind::relu:
      for (std::size_t i = 0; i < tx.size(); ++i)
        out.data()[i] = tx.data()[i] > 0.0 ? tx.data()[i] : 0.0;
      break;
    case UnaryKind::exp:
      for (std::size_t i = 0; i < tx.size(); ++i) out.data()[i] = std::exp(tx.data()[i]);
      break;
    case UnaryKind::log:
      for (std::size_t i = 0; i < tx.size(); ++i) {
        if (!(tx.data()[i] > 0.0)) {
          throw std::domain_error("log: non-positive entry at flat index " +
                                  std::to_string(i) + " of " + tx.shape_str());
        }
        out.data()[i] = std::log(tx.data()[i]);
      }
      break;
    case UnaryKind::neg:
      for (std::size_t i = 0; i < tx.size(); ++i) out.data()[i] = -tx.data()[i];
      break;
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [kind, x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& tx = t.value(x);
                const Tensor& ty = t.value(self);
                auto& dx = t.grad_buf(x);
                switch (kind) {
                  case UnaryKind::sigmoid:
                    for (std::size_t i = 0; i < g.size(); ++i) {
                      const double y = ty.data()[i];
                      dx[i] += g[i] * y * (1.0 - y);
                    }
                    break;
                  case UnaryKind::relu:
                    for (std::size_t i = 0; i < g.size(); ++i)
                      if (tx.data()[i] > 0.0) dx[i] += g[i];
                    break;
                  case UnaryKind::exp:
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * ty.data()[i];
                    break;
                  case UnaryKind::log:
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / tx.data()[i];
                    break;
                  case UnaryKind::neg:
                    for (std::size_t i = 0; i < g.size(); ++i) dx[i] -= g[i];
                    break;
                }
              },
              "apply_unary");
}

Var Tape::softmax_rows(Var x) {
  const Tensor& tx = value(x);
  require(tx.cols() > 0, "softmax_rows: empty rows in " + tx.shape_str());
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.rows(); ++i) {
    double mx = tx.at(i, 0);
    for (std::size_t j = 1; j < tx.cols(); ++j) mx = std::max(mx, tx.at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < tx.cols(); ++j) {
      const double e = std::exp(tx.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (std::size_t j = 0; j < tx.cols(); ++j) out.at(i, j) /= denom;
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& ty = t.value(self);
                auto& dx = t.grad_buf(x);
                const std::size_t m = ty.rows(), n = ty.cols();
                for (std::size_t i = 0; i < m; ++i) {
                  double dot = 0.0;
                  for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * ty.data()[i * n + j];
                  for (std::size_t j = 0; j < n; ++j)
                    dx[i * n + j] += ty.data()[i * n + j] * (g[i * n + j] - dot);
                }
              },
              "softmax_rows");
}

Var Tape::l2_normalize_rows(Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.rows(), tx.cols());
  for (std::size_t i = 0; i < tx.rows(); ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < tx.cols(); ++j) sq += tx.at(i, j) * tx.at(i, j);
    const double norm = std::sqrt(sq);
    if (norm < kNormFloor) {
      throw std::domain_error("l2_normalize_rows: degenerate row " + std::to_string(i) +
                              " with norm " + std::to_string(norm) + " in " + tx.shape_str());
    }
    for (std::size_t j = 0; j < tx.cols(); ++j) out.at(i, j) = tx.at(i, j) / norm;
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& tx = t.value(x);
                const Tensor& ty = t.value(self);
                auto& dx = t.grad_buf(x);
                const std::size_t m = tx.rows(), n = tx.cols();
                // d(v/||v||) = (g - y*(y.g)) / ||v||
                for (std::size_t i = 0; i < m; ++i) {
                  double sq = 0.0;
                  for (std::size_t j = 0; j < n; ++j) sq += tx.data()[i * n + j] * tx.data()[i * n + j];
                  const double norm = std::sqrt(sq);
                  double dot = 0.0;
                  for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * ty.data()[i * n + j];
                  for (std::size_t j = 0; j < n; ++j)
                    dx[i * n + j] += (g[i * n + j] - ty.data()[i * n + j] * dot) / norm;
                }
              },
              "l2_normalize_rows");
}

Var Tape::segment_sum(Var values, const std::vector<std::size_t>& segment_ids,
                      std::size_t num_segments) {
  const Tensor& tv = value(values);
  require(segment_ids.size() == tv.rows(),
          "segment_sum: " + std::to_string(segment_ids.size()) + " ids for " +
              tv.shape_str());
  for (std::size_t e = 0; e < segment_ids.size(); ++e) {
    if (segment_ids[e] >= num_segments) {
      throw std::out_of_range("segment_sum: id " + std::to_string(segment_ids[e]) +
                              " at position " + std::to_string(e) + " >= num_segments " +
                              std::to_string(num_segments));
    }
  }
  Tensor out(num_segments, tv.cols());
  const std::size_t n = tv.cols();
  for (std::size_t e = 0; e < segment_ids.size(); ++e) {
    const double* src = tv.data() + e * n;
    double* dst = out.data() + segment_ids[e] * n;
    for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(values),
              [values, segment_ids, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(values)) return;
                auto& dv = t.grad_buf(values);
                const std::size_t n = t.value(values).cols();
                for (std::size_t e = 0; e < segment_ids.size(); ++e) {
                  const double* src = g.data() + segment_ids[e] * n;
                  double* dst = dv.data() + e * n;
                  for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                }
              },
              "segment_sum");
}

Var Tape::gather_rows(Var x, const std::vector<std::size_t>& row_ids) {
  const Tensor& tx = value(x);
  for (std::size_t i = 0; i < row_ids.size(); ++i) {
    if (row_ids[i] >= tx.rows()) {
      throw std::out_of_range("gather_rows: row " + std::to_string(row_ids[i]) +
                              " out of range for " + tx.shape_str());
    }
  }
  Tensor out(row_ids.size(), tx.cols());
  const std::size_t n = tx.cols();
  for (std::size_t i = 0; i < row_ids.size(); ++i)
    std::copy(tx.data() + row_ids[i] * n, tx.data() + (row_ids[i] + 1) * n,
              out.data() + i * n);
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, row_ids, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                auto& dx = t.grad_buf(x);
                const std::size_t n = t.value(x).cols();
                for (std::size_t i = 0; i < row_ids.size(); ++i) {
                  const double* src = g.data() + i * n;
                  double* dst = dx.data() + row_ids[i] * n;
                  for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                }
              },
              "gather_rows");
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  const std::size_t n = value(parts[0]).cols();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).cols() == n, "concat_rows: column mismatch: " +
                                      value(p).shape_str() + " vs [?x" + std::to_string(n) + "]");
    total += value(p).rows();
    rg = rg || wants_grad(p);
  }
  Tensor out(total, n);
  std::size_t r = 0;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    std::copy(tp.data(), tp.data() + tp.size(), out.data() + r * n);
    r += tp.rows();
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), rg,
              [parts, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const std::size_t n = t.value(self).cols();
                std::size_t r = 0;
                for (Var p : parts) {
                  const std::size_t rows = t.value(p).rows();
                  if (t.wants_grad(p)) {
                    auto& dp = t.grad_buf(p);
                    for (std::size_t i = 0; i < rows * n; ++i) dp[i] += g[r * n + i];
                  }
                  r += rows;
                }
              },
              "concat_rows");
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  const std::size_t m = value(parts[0]).rows();
  std::size_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).rows() == m, "concat_cols: row mismatch: " + value(p).shape_str() +
                                      " vs [" + std::to_string(m) + "x?]");
    total += value(p).cols();
    rg = rg || wants_grad(p);
  }
  Tensor out(m, total);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Tensor& tp = value(p);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < tp.cols(); ++j) out.at(i, c0 + j) = tp.at(i, j);
    c0 += tp.cols();
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), rg,
              [parts, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty()) return;
                const std::size_t m = t.value(self).rows();
                const std::size_t total = t.value(self).cols();
                std::size_t c0 = 0;
                for (Var p : parts) {
                  const std::size_t cols = t.value(p).cols();
                  if (t.wants_grad(p)) {
                    auto& dp = t.grad_buf(p);
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < cols; ++j)
                        dp[i * cols + j] += g[i * total + c0 + j];
                  }
                  c0 += cols;
                }
              },
              "concat_cols");
}

Var Tape::reduce(ReduceKind kind, Var x, Axis axis) {
  const Tensor& tx = value(x);
  const std::size_t m = tx.rows(), n = tx.cols();
  if (axis == Axis::rows) {
    require(m > 0, "reduce: empty row axis in " + tx.shape_str());
  } else {
    require(n > 0, "reduce: empty column axis in " + tx.shape_str());
  }

  if (kind == ReduceKind::max) {
    // First index wins ties so gradients are deterministic.
    std::vector<std::size_t> argmax;
    Tensor out;
    if (axis == Axis::rows) {
      out = Tensor(1, n);
      argmax.assign(n, 0);
      for (std::size_t j = 0; j < n; ++j) {
        double best = tx.at(0, j);
        for (std::size_t i = 1; i < m; ++i)
          if (tx.at(i, j) > best) { best = tx.at(i, j); argmax[j] = i; }
        out.at(0, j) = best;
      }
    } else {
      out = Tensor(m, 1);
      argmax.assign(m, 0);
      for (std::size_t i = 0; i < m; ++i) {
        double best = tx.at(i, 0);
        for (std::size_t j = 1; j < n; ++j)
          if (tx.at(i, j) > best) { best = tx.at(i, j); argmax[i] = j; }
        out.at(i, 0) = best;
      }
    }
    Var self{static_cast<std::uint32_t>(nodes_.size())};
    return push(std::move(out), wants_grad(x),
                [x, axis, argmax, self](Tape& t) {
                  const auto& g = t.out_grad(self);
                  if (g.empty() || !t.wants_grad(x)) return;
                  auto& dx = t.grad_buf(x);
                  const std::size_t n = t.value(x).cols();
                  if (axis == Axis::rows) {
                    for (std::size_t j = 0; j < argmax.size(); ++j)
                      dx[argmax[j] * n + j] += g[j];
                  } else {
                    for (std::size_t i = 0; i < argmax.size(); ++i)
                      dx[i * n + argmax[i]] += g[i];
                  }
                },
                "reduce_max");
  }

  const bool mean = kind == ReduceKind::mean;
  Tensor out;
  if (axis == Axis::rows) {
    out = Tensor(1, n);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += tx.at(i, j);
      out.at(0, j) = mean ? acc / static_cast<double>(m) : acc;
    }
  } else {
    out = Tensor(m, 1);
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += tx.at(i, j);
      out.at(i, 0) = mean ? acc / static_cast<double>(n) : acc;
    }
  }
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(std::move(out), wants_grad(x),
              [x, axis, mean, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                const Tensor& tx = t.value(x);
                auto& dx = t.grad_buf(x);
                const std::size_t m = tx.rows(), n = tx.cols();
                const double denom = axis == Axis::rows ? static_cast<double>(m)
                                                        : static_cast<double>(n);
                for (std::size_t i = 0; i < m; ++i)
                  for (std::size_t j = 0; j < n; ++j) {
                    const double up = axis == Axis::rows ? g[j] : g[i];
                    dx[i * n + j] += mean ? up / denom : up;
                  }
              },
              "reduce");
}

Var Tape::sum_all(Var x) {
  const Tensor& tx = value(x);
  double acc = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) acc += tx.data()[i];
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(Tensor::scalar(acc), wants_grad(x),
              [x, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                auto& dx = t.grad_buf(x);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0];
              },
              "sum_all");
}

Var Tape::mean_all(Var x) {
  const Tensor& tx = value(x);
  require(tx.size() > 0, "mean_all: empty tensor");
  double acc = 0.0;
  for (std::size_t i = 0; i < tx.size(); ++i) acc += tx.data()[i];
  const double n = static_cast<double>(tx.size());
  Var self{static_cast<std::uint32_t>(nodes_.size())};
  return push(Tensor::scalar(acc / n), wants_grad(x),
              [x, n, self](Tape& t) {
                const auto& g = t.out_grad(self);
                if (g.empty() || !t.wants_grad(x)) return;
                auto& dx = t.grad_buf(x);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0] / n;
              },
              "mean_all");
}

void Tape::backward(Var loss) {
  require(loss.id < nodes_.size(), "backward: loss is not on this tape");
  const Tensor& lt = nodes_[loss.id].tensor;
  if (!lt.is_scalar()) {
    throw std::invalid_argument("backward: loss must be [1x1], got " + lt.shape_str());
  }
  grad_buf(loss)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.backward && !node.tensor.grad.empty()) node.backward(*this);
  }
}

}  // namespace mphil
