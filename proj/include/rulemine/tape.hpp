#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "rulemine/mat.hpp"
#include "rulemine/rng.hpp"
#include "rulemine/sparse.hpp"

namespace rulemine::ad {

/// Named learnable tensor. Parameters live in a ParamStore owned by the
/// model; tapes reference them and route gradients into a GradBuffer, so
/// parameter values are never copied per pass.
struct Param {
  int id = -1;
  std::string name;
  Mat value;
};

class ParamStore {
 public:
  Param& create(const std::string& name, int rows, int cols);
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  size_t count() const { return items_.size(); }
  Param& at(size_t i) { return *items_[i]; }
  const Param& at(size_t i) const { return *items_[i]; }

 private:
  std::vector<std::unique_ptr<Param>> items_;
};

/// Per-worker gradient accumulator, indexed by parameter id.
class GradBuffer {
 public:
  explicit GradBuffer(const ParamStore& store);
  Mat& of(const Param& p) { return grads_[static_cast<size_t>(p.id)]; }
  const Mat& of(const Param& p) const { return grads_[static_cast<size_t>(p.id)]; }
  void clear();
  void add(const GradBuffer& other);  // this += other
  size_t count() const { return grads_.size(); }
  Mat& at(size_t i) { return grads_[i]; }
  const Mat& at(size_t i) const { return grads_[i]; }

 private:
  std::vector<Mat> grads_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

struct AttnEdge {
  int q = 0;    // query position
  int rel = 0;  // augmented relation id
  int k = 0;    // key position
};

struct AttnOptions {
  int heads = 1;
  bool causal = false;
  double dropout_p = 0.0;
  const std::vector<uint8_t>* key_valid = nullptr;  // null = all keys valid
  const std::vector<AttnEdge>* edges = nullptr;     // relation-tagged score/value additions
  Var rel_k, rel_v;  // projected relation tables (num_relations x d); required with edges
};

/// Reverse-mode tape over dense matrices. Records closures only when a
/// gradient sink is attached; forward-only passes skip all bookkeeping.
/// Every op output is checked finite; NaN/Inf raises a numeric error.
class Tape {
 public:
  /// grads == nullptr gives a forward-only tape. `training` enables dropout,
  /// drawing from `rng` (required when training with dropout_p > 0).
  Tape(GradBuffer* grads, bool training = false, Rng* rng = nullptr);

  bool recording() const { return grads_ != nullptr; }
  bool training() const { return training_; }

  const Mat& val(Var v) const { return nodes_[static_cast<size_t>(v.id)]->value; }
  Mat& grad(Var v);
  void backward(Var scalar_loss);

  // --- leaves ---
  Var put(Mat value);
  Var from_param(Param& p);

  // --- elementwise / shape ---
  Var add(Var a, Var b);
  Var mul_elem(Var a, Var b);
  Var scale(Var a, double c);
  Var sum_all(Var a);
  Var dot_const(Var a, std::vector<double> c);
  Var slice_row(Var a, int row);
  Var pick(Var rowvec, int idx);
  Var clamp_log(Var scalar, double floor_val);
  Var gelu(Var a);
  Var tanh_act(Var a);
  Var dropout(Var a, double p);

  // --- parameterized ---
  Var gather_rows(Param& table, std::vector<int> ids);
  Var mix_rows(std::vector<std::vector<std::pair<int, double>>> rows, Param& table);
  Var linear(Var x, Param& w);
  Var bias_add(Var x, Param& b);
  Var param_matmul(Param& a, Param& b);
  Var layer_norm(Var x, Param& gain, Param& bias);

  // --- attention ---
  /// Multi-head scaled dot-product attention over already-projected inputs
  /// (xq: m x d, xk/xv: n x d), with optional per-edge relation terms added
  /// to keys and values. Projections stay outside so callers can reuse
  /// key/value projections across decode steps.
  Var attention(Var xq, Var xk, Var xv, const AttnOptions& opt);

  // --- softmax / sparse reasoning ---
  Var softmax_row(Var a);
  Var spvm(Var z, SparseView m);
  /// out = sum_r omega[r] * (z * M_r); differentiable in z and omega.
  Var reason_step(Var z, Var omega, const std::vector<SparseView>& views);

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void()> back;
  };

  static Mat& ngrad(Node& n);  // allocate-on-first-touch gradient of a node
  Var emplace(Mat value, std::function<void()> back);
  void check_finite(const Mat& m, const char* op);

  std::vector<std::unique_ptr<Node>> nodes_;
  GradBuffer* grads_ = nullptr;
  bool training_ = false;
  Rng* rng_ = nullptr;
};

}  // namespace rulemine::ad
