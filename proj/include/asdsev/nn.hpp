#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace asdsev::nn {

using Mat = Eigen::MatrixXd;

// A named trainable tensor with its accumulated gradient and optimizer
// state. Parameters live outside the tape and persist across steps.
struct Parameter {
  std::string name;
  Mat value;
  Mat grad;
  Mat adam_m, adam_v;

  Parameter() = default;
  Parameter(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    grad.setZero(value.rows(), value.cols());
  }
  void ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols()) zero_grad();
  }
};

// Reverse-mode autodiff over matrix values. Nodes are created in forward
// order (a topological order by construction); backward() sweeps the tape
// in reverse. One forward pass plus one backward per reset().
class Tape {
 public:
  using Id = std::int32_t;

  Id input(Mat value);            // constant leaf
  Id param(Parameter& p);         // trainable leaf, grads flow into p.grad
  Id gather_rows(Parameter& table, std::vector<int> ids);

  const Mat& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Mat& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

  Id add(Id a, Id b);             // same shape
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);             // elementwise
  Id scale(Id a, double s);
  Id matmul(Id a, Id b);
  Id matmul_nt(Id a, Id b);       // a * b^T
  Id add_row(Id a, Id row);       // broadcast a 1 x d row over every row of a
  Id softmax_rows(Id a);
  Id tanh_act(Id a);
  Id gelu(Id a);                  // exact erf form
  Id layer_norm(Id x, Id gamma, Id beta);  // row-wise, eps 1e-5
  Id concat_rows(Id top, Id bottom);
  Id concat_cols(const std::vector<Id>& parts);
  Id slice_cols(Id a, int col0, int ncols);
  Id row(Id a, int r);            // 1 x d view of one row
  Id sum(Id a);                   // 1 x 1
  Id mean(Id a);                  // 1 x 1

  // Seeds d(root)/d(root) = 1 and accumulates gradients down the tape and
  // into bound Parameters. root must be 1 x 1.
  void backward(Id root);

  std::size_t size() const { return nodes_.size(); }
  void reset();

 private:
  struct Node {
    Mat value;
    Mat grad;  // zero-size until a gradient reaches this node
    std::function<void(Tape&, Node&)> back;
    Parameter* bound = nullptr;
    std::vector<int> gather_ids;
  };

  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  Mat& grad_buf(Id id);  // lazily sized to the node's value shape
  Id push(Mat value, std::function<void(Tape&, Node&)> back);

  std::vector<Node> nodes_;
};

struct ParamGroup {
  std::vector<Parameter*> params;
  double lr = 1e-5;
};

// Decoupled-weight-decay Adam. One shared step count across groups.
class AdamW {
 public:
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void step(std::vector<ParamGroup>& groups);
  long step_count() const { return step_count_; }

 private:
  long step_count_ = 0;
};

void zero_grads(const std::vector<ParamGroup>& groups);

}  // namespace asdsev::nn
