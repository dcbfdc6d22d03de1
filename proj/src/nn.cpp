#include "asdsev/nn.hpp"

#include <cmath>

#include "asdsev/errors.hpp"

namespace asdsev::nn {

namespace {
constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Mat& Tape::grad_buf(Id id) {
  Node& n = node(id);
  if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
    n.grad.setZero(n.value.rows(), n.value.cols());
  return n.grad;
}

Tape::Id Tape::push(Mat value, std::function<void(Tape&, Node&)> back) {
  nodes_.push_back(Node{std::move(value), Mat{}, std::move(back), nullptr, {}});
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::input(Mat value) { return push(std::move(value), nullptr); }

Tape::Id Tape::param(Parameter& p) {
  Id id = push(p.value, [](Tape&, Node& self) {
    self.bound->ensure_grad();
    self.bound->grad += self.grad;
  });
  node(id).bound = &p;
  return id;
}

Tape::Id Tape::gather_rows(Parameter& table, std::vector<int> ids) {
  Mat out(static_cast<long>(ids.size()), table.value.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int r = ids[i];
    if (r < 0 || r >= table.value.rows())
      throw Error("gather_rows: row index out of range in " + table.name);
    out.row(static_cast<long>(i)) = table.value.row(r);
  }
  Id id = push(std::move(out), [](Tape&, Node& self) {
    self.bound->ensure_grad();
    for (std::size_t i = 0; i < self.gather_ids.size(); ++i)
      self.bound->grad.row(self.gather_ids[i]) +=
          self.grad.row(static_cast<long>(i));
  });
  node(id).bound = &table;
  node(id).gather_ids = std::move(ids);
  return id;
}

Tape::Id Tape::add(Id a, Id b) {
  return push(value(a) + value(b), [a, b](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad;
    t.grad_buf(b) += self.grad;
  });
}

Tape::Id Tape::sub(Id a, Id b) {
  return push(value(a) - value(b), [a, b](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad;
    t.grad_buf(b) -= self.grad;
  });
}

Tape::Id Tape::mul(Id a, Id b) {
  return push(value(a).cwiseProduct(value(b)), [a, b](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad.cwiseProduct(t.value(b));
    t.grad_buf(b) += self.grad.cwiseProduct(t.value(a));
  });
}

Tape::Id Tape::scale(Id a, double s) {
  return push(value(a) * s, [a, s](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad * s;
  });
}

Tape::Id Tape::matmul(Id a, Id b) {
  return push(value(a) * value(b), [a, b](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad * t.value(b).transpose();
    t.grad_buf(b) += t.value(a).transpose() * self.grad;
  });
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  return push(value(a) * value(b).transpose(), [a, b](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad * t.value(b);
    t.grad_buf(b) += self.grad.transpose() * t.value(a);
  });
}

Tape::Id Tape::add_row(Id a, Id row) {
  Mat out = value(a);
  out.rowwise() += Eigen::RowVectorXd(value(row).row(0));
  return push(std::move(out), [a, row](Tape& t, Node& self) {
    t.grad_buf(a) += self.grad;
    t.grad_buf(row) += self.grad.colwise().sum();
  });
}

Tape::Id Tape::softmax_rows(Id a) {
  Mat out = value(a);
  for (long r = 0; r < out.rows(); ++r) {
    const double m = out.row(r).maxCoeff();
    out.row(r) = (out.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  Id id = push(std::move(out), [a](Tape& t, Node& self) {
    Mat& da = t.grad_buf(a);
    for (long r = 0; r < self.value.rows(); ++r) {
      const auto y = self.value.row(r).array();
      const auto g = self.grad.row(r).array();
      const double dot = (g * y).sum();
      da.row(r).array() += y * (g - dot);
    }
  });
  return id;
}

Tape::Id Tape::tanh_act(Id a) {
  return push(value(a).array().tanh().matrix(), [a](Tape& t, Node& self) {
    t.grad_buf(a).array() +=
        self.grad.array() * (1.0 - self.value.array().square());
  });
}

Tape::Id Tape::gelu(Id a) {
  const Mat& x = value(a);
  Mat out(x.rows(), x.cols());
  for (long i = 0; i < x.size(); ++i) {
    const double v = x(i);
    out(i) = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return push(std::move(out), [a](Tape& t, Node& self) {
    const Mat& x = t.value(a);
    Mat& da = t.grad_buf(a);
    for (long i = 0; i < x.size(); ++i) {
      const double v = x(i);
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      da(i) += self.grad(i) * (cdf + v * pdf);
    }
  });
}

Tape::Id Tape::layer_norm(Id x, Id gamma, Id beta) {
  const Mat& xv = value(x);
  const long d = xv.cols();
  Mat xhat(xv.rows(), d);
  Mat out(xv.rows(), d);
  std::vector<double> inv_sigma(static_cast<std::size_t>(xv.rows()));
  const auto g = value(gamma).row(0);
  const auto b = value(beta).row(0);
  for (long r = 0; r < xv.rows(); ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().sum() / d;
    const double inv = 1.0 / std::sqrt(var + kLnEps);
    inv_sigma[static_cast<std::size_t>(r)] = inv;
    xhat.row(r) = (xv.row(r).array() - mu) * inv;
    out.row(r) = (xhat.row(r).array() * g.array()) + b.array();
  }
  Id id = push(std::move(out),
               [x, gamma, beta, xhat = std::move(xhat),
                inv_sigma = std::move(inv_sigma)](Tape& t, Node& self) {
                 const auto g = t.value(gamma).row(0);
                 Mat& dx = t.grad_buf(x);
                 Mat& dgamma = t.grad_buf(gamma);
                 Mat& dbeta = t.grad_buf(beta);
                 for (long r = 0; r < self.value.rows(); ++r) {
                   const auto go = self.grad.row(r).array();
                   const auto xh = xhat.row(r).array();
                   const Eigen::ArrayXd dxhat = (go * g.array()).transpose();
                   const double m1 = dxhat.mean();
                   const double m2 = (dxhat * xh.transpose()).mean();
                   dx.row(r).array() +=
                       ((dxhat - m1 - xh.transpose() * m2) *
                        inv_sigma[static_cast<std::size_t>(r)])
                           .transpose();
                   dgamma.row(0).array() += go * xh;
                   dbeta.row(0).array() += go;
                 }
               });
  return id;
}

Tape::Id Tape::concat_rows(Id top, Id bottom) {
  const long nt = value(top).rows();
  Mat out(nt + value(bottom).rows(), value(top).cols());
  out.topRows(nt) = value(top);
  out.bottomRows(value(bottom).rows()) = value(bottom);
  return push(std::move(out), [top, bottom, nt](Tape& t, Node& self) {
    t.grad_buf(top) += self.grad.topRows(nt);
    t.grad_buf(bottom) += self.grad.bottomRows(self.grad.rows() - nt);
  });
}

Tape::Id Tape::concat_cols(const std::vector<Id>& parts) {
  if (parts.empty()) throw Error("concat_cols: empty part list");
  long cols = 0;
  for (Id p : parts) cols += value(p).cols();
  Mat out(value(parts[0]).rows(), cols);
  long c = 0;
  for (Id p : parts) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  return push(std::move(out), [parts](Tape& t, Node& self) {
    long c = 0;
    for (Id p : parts) {
      const long w = t.value(p).cols();
      t.grad_buf(p) += self.grad.middleCols(c, w);
      c += w;
    }
  });
}

Tape::Id Tape::slice_cols(Id a, int col0, int ncols) {
  return push(value(a).middleCols(col0, ncols),
              [a, col0, ncols](Tape& t, Node& self) {
                t.grad_buf(a).middleCols(col0, ncols) += self.grad;
              });
}

Tape::Id Tape::row(Id a, int r) {
  if (r < 0 || r >= value(a).rows()) throw Error("row: index out of range");
  return push(value(a).row(r), [a, r](Tape& t, Node& self) {
    t.grad_buf(a).row(r) += self.grad.row(0);
  });
}

Tape::Id Tape::sum(Id a) {
  Mat out(1, 1);
  out(0, 0) = value(a).sum();
  return push(std::move(out), [a](Tape& t, Node& self) {
    t.grad_buf(a).array() += self.grad(0, 0);
  });
}

Tape::Id Tape::mean(Id a) {
  Mat out(1, 1);
  out(0, 0) = value(a).mean();
  return push(std::move(out), [a](Tape& t, Node& self) {
    t.grad_buf(a).array() +=
        self.grad(0, 0) / static_cast<double>(t.value(a).size());
  });
}

void Tape::backward(Id root) {
  Node& r = node(root);
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw Error("backward: root must be a 1x1 value");
  grad_buf(root)(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.size() == 0 || !n.back) continue;
    n.back(*this, n);
  }
}

void Tape::reset() { nodes_.clear(); }

void AdamW::step(std::vector<ParamGroup>& groups) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count_));
  for (ParamGroup& group : groups) {
    for (Parameter* p : group.params) {
      p->ensure_grad();
      if (p->adam_m.size() == 0) {
        p->adam_m.setZero(p->value.rows(), p->value.cols());
        p->adam_v.setZero(p->value.rows(), p->value.cols());
      }
      p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
      p->adam_v =
          (beta2 * p->adam_v.array() + (1.0 - beta2) * p->grad.array().square())
              .matrix();
      const auto m_hat = p->adam_m.array() / bc1;
      const auto v_hat = p->adam_v.array() / bc2;
      p->value.array() -=
          group.lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p->value.array());
    }
  }
}

void zero_grads(const std::vector<ParamGroup>& groups) {
  for (const ParamGroup& group : groups)
    for (Parameter* p : group.params) p->zero_grad();
}

}  // namespace asdsev::nn
