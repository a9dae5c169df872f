#include "rulemine/tape.hpp"

#include <cassert>
#include <cmath>

#include "rulemine/errors.hpp"

namespace rulemine::ad {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kLayerNormEps = 1e-5;
}  // namespace

Param& ParamStore::create(const std::string& name, int rows, int cols) {
  assert(find(name) == nullptr);
  auto p = std::make_unique<Param>();
  p->id = static_cast<int>(items_.size());
  p->name = name;
  p->value = Mat(rows, cols);
  items_.push_back(std::move(p));
  return *items_.back();
}

Param* ParamStore::find(const std::string& name) {
  for (auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

const Param* ParamStore::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

GradBuffer::GradBuffer(const ParamStore& store) {
  grads_.reserve(store.count());
  for (size_t i = 0; i < store.count(); ++i) {
    const Mat& v = store.at(i).value;
    grads_.emplace_back(v.rows, v.cols);
  }
}

void GradBuffer::clear() {
  for (Mat& g : grads_) g.zero();
}

void GradBuffer::add(const GradBuffer& other) {
  assert(grads_.size() == other.grads_.size());
  for (size_t i = 0; i < grads_.size(); ++i) {
    Mat& dst = grads_[i];
    const Mat& src = other.grads_[i];
    for (size_t k = 0; k < dst.size(); ++k) dst.a[k] += src.a[k];
  }
}

Tape::Tape(GradBuffer* grads, bool training, Rng* rng) : grads_(grads), training_(training), rng_(rng) {}

Mat& Tape::ngrad(Node& n) {
  if (n.grad.empty()) n.grad = Mat(n.value.rows, n.value.cols);
  return n.grad;
}

Mat& Tape::grad(Var v) { return ngrad(*nodes_[static_cast<size_t>(v.id)]); }

void Tape::check_finite(const Mat& m, const char* op) {
  if (!all_finite(m)) fail(ErrorCategory::numeric, std::string("non-finite value produced by '") + op + "'");
}

Var Tape::emplace(Mat value, std::function<void()> back) {
  auto n = std::make_unique<Node>();
  n->value = std::move(value);
  if (recording()) n->back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::backward(Var scalar_loss) {
  assert(recording());
  Node& loss = *nodes_[static_cast<size_t>(scalar_loss.id)];
  assert(loss.value.rows == 1 && loss.value.cols == 1);
  ngrad(loss)(0, 0) = 1.0;
  for (int i = scalar_loss.id; i >= 0; --i) {
    Node& n = *nodes_[static_cast<size_t>(i)];
    if (!n.back || n.grad.empty()) continue;
    n.back();
  }
}

// --- leaves -----------------------------------------------------------------

Var Tape::put(Mat value) {
  check_finite(value, "put");
  return emplace(std::move(value), {});
}

Var Tape::from_param(Param& p) {
  check_finite(p.value, "from_param");
  Mat v = p.value;
  GradBuffer* gb = grads_;
  Param* pp = &p;
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, gb, pp]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& dst = gb->of(*pp);
    for (size_t k = 0; k < dst.size(); ++k) dst.a[k] += g.a[k];
  };
  return emplace(std::move(v), back);
}

// --- elementwise / shape ----------------------------------------------------

Var Tape::add(Var a, Var b) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Node* nb = nodes_[static_cast<size_t>(b.id)].get();
  assert(na->value.same_shape(nb->value));
  Mat v = na->value;
  for (size_t k = 0; k < v.size(); ++k) v.a[k] += nb->value.a[k];
  check_finite(v, "add");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, nb]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    Mat& gb2 = ngrad(*nb);
    for (size_t k = 0; k < g.size(); ++k) {
      ga.a[k] += g.a[k];
      gb2.a[k] += g.a[k];
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::mul_elem(Var a, Var b) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Node* nb = nodes_[static_cast<size_t>(b.id)].get();
  assert(na->value.same_shape(nb->value));
  Mat v = na->value;
  for (size_t k = 0; k < v.size(); ++k) v.a[k] *= nb->value.a[k];
  check_finite(v, "mul_elem");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, nb]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    Mat& gb2 = ngrad(*nb);
    for (size_t k = 0; k < g.size(); ++k) {
      ga.a[k] += g.a[k] * nb->value.a[k];
      gb2.a[k] += g.a[k] * na->value.a[k];
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::scale(Var a, double c) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Mat v = na->value;
  for (double& x : v.a) x *= c;
  check_finite(v, "scale");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, c]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    for (size_t k = 0; k < g.size(); ++k) ga.a[k] += c * g.a[k];
  };
  return emplace(std::move(v), back);
}

Var Tape::sum_all(Var a) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  double s = 0.0;
  for (double x : na->value.a) s += x;
  Mat v(1, 1);
  v(0, 0) = s;
  check_finite(v, "sum_all");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na]() {
    const double g = nodes_[static_cast<size_t>(out.id)]->grad(0, 0);
    Mat& ga = ngrad(*na);
    for (double& x : ga.a) x += g;
  };
  return emplace(std::move(v), back);
}

Var Tape::dot_const(Var a, std::vector<double> c) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  assert(na->value.size() == c.size());
  double s = 0.0;
  for (size_t k = 0; k < c.size(); ++k) s += na->value.a[k] * c[k];
  Mat v(1, 1);
  v(0, 0) = s;
  check_finite(v, "dot_const");
  Var out{static_cast<int>(nodes_.size())};
  auto cc = std::make_shared<std::vector<double>>(std::move(c));
  auto back = [this, out, na, cc]() {
    const double g = nodes_[static_cast<size_t>(out.id)]->grad(0, 0);
    Mat& ga = ngrad(*na);
    for (size_t k = 0; k < ga.size(); ++k) ga.a[k] += g * (*cc)[k];
  };
  return emplace(std::move(v), back);
}

Var Tape::slice_row(Var a, int row) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  assert(row >= 0 && row < na->value.rows);
  Mat v(1, na->value.cols);
  for (int j = 0; j < v.cols; ++j) v(0, j) = na->value(row, j);
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, row]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    for (int j = 0; j < g.cols; ++j) ga(row, j) += g(0, j);
  };
  return emplace(std::move(v), back);
}

Var Tape::pick(Var rowvec, int idx) {
  Node* na = nodes_[static_cast<size_t>(rowvec.id)].get();
  assert(na->value.rows == 1 && idx >= 0 && idx < na->value.cols);
  Mat v(1, 1);
  v(0, 0) = na->value(0, idx);
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, idx]() {
    ngrad(*na)(0, idx) += nodes_[static_cast<size_t>(out.id)]->grad(0, 0);
  };
  return emplace(std::move(v), back);
}

Var Tape::clamp_log(Var scalar, double floor_val) {
  Node* na = nodes_[static_cast<size_t>(scalar.id)].get();
  assert(na->value.rows == 1 && na->value.cols == 1);
  assert(floor_val > 0.0);
  const double x = na->value(0, 0);
  Mat v(1, 1);
  v(0, 0) = std::log(std::max(x, floor_val));
  check_finite(v, "clamp_log");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, floor_val]() {
    const double x2 = na->value(0, 0);
    if (x2 > floor_val) {
      ngrad(*na)(0, 0) += nodes_[static_cast<size_t>(out.id)]->grad(0, 0) / x2;
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::gelu(Var a) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Mat v = na->value;
  for (double& x : v.a) x = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  check_finite(v, "gelu");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    for (size_t k = 0; k < g.size(); ++k) {
      const double x = na->value.a[k];
      const double d = 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * std::exp(-0.5 * x * x) * kInvSqrt2Pi;
      ga.a[k] += g.a[k] * d;
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::tanh_act(Var a) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Mat v = na->value;
  for (double& x : v.a) x = std::tanh(x);
  check_finite(v, "tanh");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na]() {
    Node& o = *nodes_[static_cast<size_t>(out.id)];
    const Mat& g = o.grad;
    Mat& ga = ngrad(*na);
    for (size_t k = 0; k < g.size(); ++k) {
      const double y = o.value.a[k];
      ga.a[k] += g.a[k] * (1.0 - y * y);
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::dropout(Var a, double p) {
  if (!training_ || p <= 0.0) return a;
  if (rng_ == nullptr) fail(ErrorCategory::internal, "dropout requires an rng in training mode");
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  const double keep_scale = 1.0 / (1.0 - p);
  auto mult = std::make_shared<std::vector<double>>(na->value.size());
  Mat v = na->value;
  for (size_t k = 0; k < v.size(); ++k) {
    const double m = rng_->real01() >= p ? keep_scale : 0.0;
    (*mult)[k] = m;
    v.a[k] *= m;
  }
  check_finite(v, "dropout");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na, mult]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& ga = ngrad(*na);
    for (size_t k = 0; k < g.size(); ++k) ga.a[k] += g.a[k] * (*mult)[k];
  };
  return emplace(std::move(v), back);
}

// --- parameterized ----------------------------------------------------------

Var Tape::gather_rows(Param& table, std::vector<int> ids) {
  const Mat& t = table.value;
  Mat v(static_cast<int>(ids.size()), t.cols);
  for (size_t i = 0; i < ids.size(); ++i) {
    assert(ids[i] >= 0 && ids[i] < t.rows);
    const double* src = t.row(ids[i]);
    double* dst = v.row(static_cast<int>(i));
    for (int j = 0; j < t.cols; ++j) dst[j] = src[j];
  }
  check_finite(v, "gather_rows");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pp = &table;
  auto idv = std::make_shared<std::vector<int>>(std::move(ids));
  auto back = [this, out, gb, pp, idv]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gt = gb->of(*pp);
    for (size_t i = 0; i < idv->size(); ++i) {
      double* dst = gt.row((*idv)[i]);
      const double* src = g.row(static_cast<int>(i));
      for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::mix_rows(std::vector<std::vector<std::pair<int, double>>> rows, Param& table) {
  const Mat& t = table.value;
  Mat v(static_cast<int>(rows.size()), t.cols);
  for (size_t i = 0; i < rows.size(); ++i) {
    double* dst = v.row(static_cast<int>(i));
    for (const auto& [r, c] : rows[i]) {
      const double* src = t.row(r);
      for (int j = 0; j < t.cols; ++j) dst[j] += c * src[j];
    }
  }
  check_finite(v, "mix_rows");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pp = &table;
  auto rs = std::make_shared<std::vector<std::vector<std::pair<int, double>>>>(std::move(rows));
  auto back = [this, out, gb, pp, rs]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gt = gb->of(*pp);
    for (size_t i = 0; i < rs->size(); ++i) {
      const double* src = g.row(static_cast<int>(i));
      for (const auto& [r, c] : (*rs)[i]) {
        double* dst = gt.row(r);
        for (int j = 0; j < g.cols; ++j) dst[j] += c * src[j];
      }
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::linear(Var x, Param& w) {
  Node* nx = nodes_[static_cast<size_t>(x.id)].get();
  Mat v;
  mm(nx->value, w.value, v);
  check_finite(v, "linear");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pw = &w;
  auto back = [this, out, nx, gb, pw]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    mm_abt_add(g, pw->value, ngrad(*nx));    // dx += g * W^T
    mm_atb_add(nx->value, g, gb->of(*pw));   // gW += x^T * g
  };
  return emplace(std::move(v), back);
}

Var Tape::bias_add(Var x, Param& b) {
  Node* nx = nodes_[static_cast<size_t>(x.id)].get();
  assert(b.value.rows == 1 && b.value.cols == nx->value.cols);
  Mat v = nx->value;
  for (int i = 0; i < v.rows; ++i) {
    double* row = v.row(i);
    const double* bb = b.value.row(0);
    for (int j = 0; j < v.cols; ++j) row[j] += bb[j];
  }
  check_finite(v, "bias_add");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pb = &b;
  auto back = [this, out, nx, gb, pb]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gx = ngrad(*nx);
    Mat& gbias = gb->of(*pb);
    for (int i = 0; i < g.rows; ++i) {
      const double* src = g.row(i);
      double* dst = gx.row(i);
      double* db = gbias.row(0);
      for (int j = 0; j < g.cols; ++j) {
        dst[j] += src[j];
        db[j] += src[j];
      }
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::param_matmul(Param& a, Param& b) {
  Mat v;
  mm(a.value, b.value, v);
  check_finite(v, "param_matmul");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pa = &a;
  Param* pb = &b;
  auto back = [this, out, gb, pa, pb]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    mm_abt_add(g, pb->value, gb->of(*pa));
    mm_atb_add(pa->value, g, gb->of(*pb));
  };
  return emplace(std::move(v), back);
}

Var Tape::layer_norm(Var x, Param& gain, Param& bias) {
  Node* nx = nodes_[static_cast<size_t>(x.id)].get();
  const int rows = nx->value.rows, cols = nx->value.cols;
  assert(gain.value.cols == cols && bias.value.cols == cols);
  auto xhat = std::make_shared<Mat>(rows, cols);
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  Mat v(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const double* row = nx->value.row(i);
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += row[j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= cols;
    const double is = 1.0 / std::sqrt(var + kLayerNormEps);
    (*inv_std)[static_cast<size_t>(i)] = is;
    double* xh = xhat->row(i);
    double* vo = v.row(i);
    const double* gm = gain.value.row(0);
    const double* bm = bias.value.row(0);
    for (int j = 0; j < cols; ++j) {
      xh[j] = (row[j] - mean) * is;
      vo[j] = gm[j] * xh[j] + bm[j];
    }
  }
  check_finite(v, "layer_norm");
  Var out{static_cast<int>(nodes_.size())};
  GradBuffer* gb = grads_;
  Param* pg = &gain;
  Param* pb = &bias;
  auto back = [this, out, nx, gb, pg, pb, xhat, inv_std]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gx = ngrad(*nx);
    Mat& ggain = gb->of(*pg);
    Mat& gbias = gb->of(*pb);
    const int rows = g.rows, cols = g.cols;
    std::vector<double> dxhat(static_cast<size_t>(cols));
    for (int i = 0; i < rows; ++i) {
      const double* gr = g.row(i);
      const double* xh = xhat->row(i);
      const double* gm = pg->value.row(0);
      double m1 = 0.0, m2 = 0.0;
      for (int j = 0; j < cols; ++j) {
        dxhat[static_cast<size_t>(j)] = gr[j] * gm[j];
        m1 += dxhat[static_cast<size_t>(j)];
        m2 += dxhat[static_cast<size_t>(j)] * xh[j];
        ggain.row(0)[j] += gr[j] * xh[j];
        gbias.row(0)[j] += gr[j];
      }
      m1 /= cols;
      m2 /= cols;
      const double is = (*inv_std)[static_cast<size_t>(i)];
      double* gxr = gx.row(i);
      for (int j = 0; j < cols; ++j) {
        gxr[j] += is * (dxhat[static_cast<size_t>(j)] - m1 - xh[j] * m2);
      }
    }
  };
  return emplace(std::move(v), back);
}

// --- softmax / sparse reasoning ----------------------------------------------

Var Tape::softmax_row(Var a) {
  Node* na = nodes_[static_cast<size_t>(a.id)].get();
  Mat v = na->value;
  for (int i = 0; i < v.rows; ++i) {
    double* row = v.row(i);
    double mx = row[0];
    for (int j = 1; j < v.cols; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < v.cols; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < v.cols; ++j) row[j] /= sum;
  }
  check_finite(v, "softmax_row");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, na]() {
    Node& o = *nodes_[static_cast<size_t>(out.id)];
    const Mat& g = o.grad;
    Mat& ga = ngrad(*na);
    for (int i = 0; i < g.rows; ++i) {
      const double* gr = g.row(i);
      const double* y = o.value.row(i);
      double s = 0.0;
      for (int j = 0; j < g.cols; ++j) s += gr[j] * y[j];
      double* gar = ga.row(i);
      for (int j = 0; j < g.cols; ++j) gar[j] += y[j] * (gr[j] - s);
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::spvm(Var z, SparseView m) {
  Node* nz = nodes_[static_cast<size_t>(z.id)].get();
  assert(nz->value.rows == 1 && nz->value.cols == m.m->n);
  const int n = m.m->n;
  Mat v(1, n);
  for (int i = 0; i < n; ++i) {
    const double zi = nz->value(0, i);
    if (zi == 0.0) continue;
    m.for_row(i, [&](int j) { v(0, j) += zi; });
  }
  check_finite(v, "spvm");
  Var out{static_cast<int>(nodes_.size())};
  auto back = [this, out, nz, m]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gz = ngrad(*nz);
    for (int i = 0; i < g.cols; ++i) {
      double s = 0.0;
      m.for_row(i, [&](int j) { s += g(0, j); });
      gz(0, i) += s;
    }
  };
  return emplace(std::move(v), back);
}

Var Tape::reason_step(Var z, Var omega, const std::vector<SparseView>& views) {
  Node* nz = nodes_[static_cast<size_t>(z.id)].get();
  Node* nw = nodes_[static_cast<size_t>(omega.id)].get();
  const int n = nz->value.cols;
  const int nrel = static_cast<int>(views.size());
  assert(nz->value.rows == 1 && nw->value.rows == 1 && nw->value.cols == nrel);
  Mat v(1, n);
  for (int r = 0; r < nrel; ++r) {
    const double w = nw->value(0, r);
    if (w == 0.0) continue;
    const SparseView& vw = views[static_cast<size_t>(r)];
    for (int i = 0; i < n; ++i) {
      const double zi = nz->value(0, i);
      if (zi == 0.0) continue;
      const double wz = w * zi;
      vw.for_row(i, [&](int j) { v(0, j) += wz; });
    }
  }
  check_finite(v, "reason_step");
  Var out{static_cast<int>(nodes_.size())};
  auto vs = std::make_shared<std::vector<SparseView>>(views);
  auto back = [this, out, nz, nw, vs]() {
    const Mat& g = nodes_[static_cast<size_t>(out.id)]->grad;
    Mat& gz = ngrad(*nz);
    Mat& gw = ngrad(*nw);
    const int n = nz->value.cols;
    for (int r = 0; r < static_cast<int>(vs->size()); ++r) {
      const SparseView& vw = (*vs)[static_cast<size_t>(r)];
      const double w = nw->value(0, r);
      double dw = 0.0;
      for (int i = 0; i < n; ++i) {
        const double zi = nz->value(0, i);
        double rowsum = 0.0;
        vw.for_row(i, [&](int j) { rowsum += g(0, j); });
        if (zi != 0.0) dw += zi * rowsum;
        gz(0, i) += w * rowsum;
      }
      gw(0, r) += dw;
    }
  };
  return emplace(std::move(v), back);
}

// --- attention ----------------------------------------------------------------

namespace {

struct AttnSaved {
  std::vector<Mat> alpha;   // per head, post-softmax, pre-dropout
  std::vector<Mat> dropm;   // per head dropout multipliers; empty when inactive
  std::vector<AttnEdge> edges;
  std::vector<uint8_t> key_valid;  // empty = all valid
  int heads = 1;
  int dk = 0;
  bool causal = false;
  double scale = 1.0;

  bool valid_pair(int i, int j) const {
    if (!key_valid.empty() && !key_valid[static_cast<size_t>(j)]) return false;
    if (causal && j > i) return false;
    return true;
  }
  double mult(int h, int i, int j) const {
    return dropm.empty() ? 1.0 : dropm[static_cast<size_t>(h)](i, j);
  }
};

// scratch = head slice of src, transposed to dk x rows
void transpose_head(const Mat& src, int hs, int dk, Mat& scratch) {
  scratch = Mat(dk, src.rows);
  for (int i = 0; i < src.rows; ++i) {
    const double* row = src.row(i) + hs;
    for (int k = 0; k < dk; ++k) scratch(k, i) = row[k];
  }
}

}  // namespace

Var Tape::attention(Var xq, Var xk, Var xv, const AttnOptions& opt) {
  Node* nq = nodes_[static_cast<size_t>(xq.id)].get();
  Node* nk = nodes_[static_cast<size_t>(xk.id)].get();
  Node* nv = nodes_[static_cast<size_t>(xv.id)].get();
  Node* nrk = opt.rel_k.valid() ? nodes_[static_cast<size_t>(opt.rel_k.id)].get() : nullptr;
  Node* nrv = opt.rel_v.valid() ? nodes_[static_cast<size_t>(opt.rel_v.id)].get() : nullptr;
  const int m = nq->value.rows;
  const int n = nk->value.rows;
  const int d = nq->value.cols;
  assert(nk->value.cols == d && nv->value.cols == d && nv->value.rows == n);
  assert(d % opt.heads == 0);
  const int dk = d / opt.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  const bool has_edges = opt.edges != nullptr && !opt.edges->empty();
  assert(!has_edges || (nrk != nullptr && nrv != nullptr));

  auto sv = std::make_shared<AttnSaved>();
  sv->heads = opt.heads;
  sv->dk = dk;
  sv->causal = opt.causal;
  sv->scale = scale;
  if (opt.key_valid != nullptr) sv->key_valid = *opt.key_valid;
  if (has_edges) sv->edges = *opt.edges;

  const bool drop_active = training_ && opt.dropout_p > 0.0;
  if (drop_active && rng_ == nullptr) fail(ErrorCategory::internal, "attention dropout requires an rng");
  const double keep_scale = drop_active ? 1.0 / (1.0 - opt.dropout_p) : 1.0;

  Mat out(m, d);
  Mat kt;  // transposed key head slice, contraction stays k-ascending per cell
  sv->alpha.reserve(static_cast<size_t>(opt.heads));
  if (drop_active) sv->dropm.reserve(static_cast<size_t>(opt.heads));
  for (int h = 0; h < opt.heads; ++h) {
    const int hs = h * dk;
    transpose_head(nk->value, hs, dk, kt);
    Mat scores(m, n);
    for (int i = 0; i < m; ++i) {
      const double* qrow = nq->value.row(i) + hs;
      double* srow = scores.row(i);
      for (int k = 0; k < dk; ++k) {
        const double q = qrow[k];
        const double* krow = kt.row(k);
        for (int j = 0; j < n; ++j) srow[j] += q * krow[j];
      }
      for (int j = 0; j < n; ++j) srow[j] *= scale;
    }
    if (has_edges) {
      for (const AttnEdge& e : sv->edges) {
        assert(sv->valid_pair(e.q, e.k));
        const double* qrow = nq->value.row(e.q) + hs;
        const double* rrow = nrk->value.row(e.rel) + hs;
        double s = 0.0;
        for (int k = 0; k < dk; ++k) s += qrow[k] * rrow[k];
        scores(e.q, e.k) += s * scale;
      }
    }
    Mat alpha(m, n);
    for (int i = 0; i < m; ++i) {
      double mx = 0.0;
      bool any = false;
      for (int j = 0; j < n; ++j) {
        if (!sv->valid_pair(i, j)) continue;
        if (!any || scores(i, j) > mx) mx = scores(i, j);
        any = true;
      }
      if (!any) fail(ErrorCategory::internal, "attention row has no valid keys");
      double sum = 0.0;
      for (int j = 0; j < n; ++j) {
        if (!sv->valid_pair(i, j)) continue;
        const double e = std::exp(scores(i, j) - mx);
        alpha(i, j) = e;
        sum += e;
      }
      const double inv = 1.0 / sum;
      for (int j = 0; j < n; ++j) {
        if (alpha(i, j) != 0.0) alpha(i, j) *= inv;
      }
    }
    Mat dropm;
    if (drop_active) {
      dropm = Mat(m, n);
      for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
          if (!sv->valid_pair(i, j)) continue;
          dropm(i, j) = rng_->real01() >= opt.dropout_p ? keep_scale : 0.0;
        }
      }
    }
    // value aggregation
    for (int i = 0; i < m; ++i) {
      double* orow = out.row(i) + hs;
      for (int j = 0; j < n; ++j) {
        double a = alpha(i, j);
        if (a == 0.0) continue;
        if (drop_active) {
          a *= dropm(i, j);
          if (a == 0.0) continue;
        }
        const double* vrow = nv->value.row(j) + hs;
        for (int k = 0; k < dk; ++k) orow[k] += a * vrow[k];
      }
    }
    if (has_edges) {
      for (const AttnEdge& e : sv->edges) {
        double a = alpha(e.q, e.k);
        if (drop_active) a *= dropm(e.q, e.k);
        if (a == 0.0) continue;
        const double* rrow = nrv->value.row(e.rel) + hs;
        double* orow = out.row(e.q) + hs;
        for (int k = 0; k < dk; ++k) orow[k] += a * rrow[k];
      }
    }
    sv->alpha.push_back(std::move(alpha));
    if (drop_active) sv->dropm.push_back(std::move(dropm));
  }
  check_finite(out, "attention");

  Var outv{static_cast<int>(nodes_.size())};
  if (!recording()) return emplace(std::move(out), {});

  auto back = [this, outv, nq, nk, nv, nrk, nrv, sv, m, n]() {
    const Mat& g = nodes_[static_cast<size_t>(outv.id)]->grad;
    const int heads = sv->heads, dk = sv->dk;
    const double scale = sv->scale;
    Mat& dxq = ngrad(*nq);
    Mat& dxk = ngrad(*nk);
    Mat& dxv = ngrad(*nv);
    Mat* grk = (nrk != nullptr && !sv->edges.empty()) ? &ngrad(*nrk) : nullptr;
    Mat* grv = (nrv != nullptr && !sv->edges.empty()) ? &ngrad(*nrv) : nullptr;
    Mat dalpha(m, n), dscore(m, n), vt;
    for (int h = 0; h < heads; ++h) {
      const int hs = h * dk;
      const Mat& alpha = sv->alpha[static_cast<size_t>(h)];
      // value path: dalpha = dOut_h * XV_h^T, via transposed value slice
      transpose_head(nv->value, hs, dk, vt);
      dalpha.zero();
      for (int i = 0; i < m; ++i) {
        const double* grow = g.row(i) + hs;
        double* darow = dalpha.row(i);
        for (int k = 0; k < dk; ++k) {
          const double gk = grow[k];
          const double* vrow = vt.row(k);
          for (int j = 0; j < n; ++j) darow[j] += gk * vrow[j];
        }
      }
      for (int i = 0; i < m; ++i) {
        const double* grow = g.row(i) + hs;
        for (int j = 0; j < n; ++j) {
          const double au = alpha(i, j) * sv->mult(h, i, j);
          if (au == 0.0) continue;
          double* dvrow = dxv.row(j) + hs;
          for (int k = 0; k < dk; ++k) dvrow[k] += au * grow[k];
        }
      }
      for (const AttnEdge& e : sv->edges) {
        const double* grow = g.row(e.q) + hs;
        const double* rrow = nrv->value.row(e.rel) + hs;
        double s = 0.0;
        for (int k = 0; k < dk; ++k) s += grow[k] * rrow[k];
        dalpha(e.q, e.k) += s;
        const double au = alpha(e.q, e.k) * sv->mult(h, e.q, e.k);
        if (au != 0.0 && grv != nullptr) {
          double* drrow = grv->row(e.rel) + hs;
          for (int k = 0; k < dk; ++k) drrow[k] += au * grow[k];
        }
      }
      // invalid cells have alpha == 0, so they drop out of both folds below
      if (!sv->dropm.empty()) {
        const Mat& dm = sv->dropm[static_cast<size_t>(h)];
        for (size_t k = 0; k < dalpha.size(); ++k) dalpha.a[k] *= dm.a[k];
      }
      // softmax backward: dS = alpha .* (dalpha - rowsum(dalpha .* alpha))
      for (int i = 0; i < m; ++i) {
        const double* dar = dalpha.row(i);
        const double* ar = alpha.row(i);
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += dar[j] * ar[j];
        double* dsr = dscore.row(i);
        for (int j = 0; j < n; ++j) dsr[j] = ar[j] * (dar[j] - s);
      }
      // score path
      for (int i = 0; i < m; ++i) {
        double* dqrow = dxq.row(i) + hs;
        const double* qrow = nq->value.row(i) + hs;
        const double* dsr = dscore.row(i);
        for (int j = 0; j < n; ++j) {
          const double ds = dsr[j];
          if (ds == 0.0) continue;
          const double dss = ds * scale;
          const double* krow = nk->value.row(j) + hs;
          double* dkrow = dxk.row(j) + hs;
          for (int k = 0; k < dk; ++k) {
            dqrow[k] += dss * krow[k];
            dkrow[k] += dss * qrow[k];
          }
        }
      }
      if (grk != nullptr) {
        for (const AttnEdge& e : sv->edges) {
          const double ds = dscore(e.q, e.k);
          if (ds == 0.0) continue;
          const double dss = ds * scale;
          const double* rrow = nrk->value.row(e.rel) + hs;
          const double* qrow = nq->value.row(e.q) + hs;
          double* dqrow = dxq.row(e.q) + hs;
          double* drrow = grk->row(e.rel) + hs;
          for (int k = 0; k < dk; ++k) {
            dqrow[k] += dss * rrow[k];
            drrow[k] += dss * qrow[k];
          }
        }
      }
    }
  };
  return emplace(std::move(out), back);
}

}  // namespace rulemine::ad
