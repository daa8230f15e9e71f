#include "difftad/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace difftad::ad {

const Mat& Var::val() const { return tape_->value(id_); }
const Mat& Var::grad() const { return tape_->gradient(id_); }

int Tape::push(Mat value, BackFn back) {
  values_.push_back(std::move(value));
  backs_.push_back(std::move(back));
  grads_.emplace_back();
  touched_.push_back(0);
  return static_cast<int>(values_.size()) - 1;
}

void Tape::accumulate(int id, const Mat& g) {
  auto i = static_cast<std::size_t>(id);
  if (!touched_[i]) {
    grads_[i] = g;
    touched_[i] = 1;
  } else {
    grads_[i] += g;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.val().rows() != 1 || loss.val().cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be 1x1");
  }
  accumulate(loss.id(), Mat::Ones(1, 1));
  for (int i = loss.id(); i >= 0; --i) {
    auto u = static_cast<std::size_t>(i);
    if (touched_[u] && backs_[u]) backs_[u](*this, grads_[u]);
  }
  // untouched gradients read as zero
  for (std::size_t u = 0; u < values_.size(); ++u) {
    if (!touched_[u]) grads_[u] = Mat::Zero(values_[u].rows(), values_[u].cols());
  }
}

void Tape::clear() {
  values_.clear();
  grads_.clear();
  backs_.clear();
  touched_.clear();
}

Var constant(Tape& t, Mat value) { return Var(&t, t.push(std::move(value))); }

Var constant_scalar(Tape& t, double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return constant(t, std::move(m));
}

namespace {
Tape& same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("ad: vars from different tapes");
  return *a.tape();
}
void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string("ad: shape mismatch in ") + op);
  }
}
}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "add");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val() + b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
  return Var(&t, id);
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "sub");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val() - b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, -g);
  });
  return Var(&t, id);
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "mul");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val().cwiseProduct(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
  });
  return Var(&t, id);
}

Var div(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "div");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val().cwiseQuotient(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    const Mat& bv = tp.value(ib);
    tp.accumulate(ia, g.cwiseQuotient(bv));
    tp.accumulate(ib, -g.cwiseProduct(tp.value(ia)).cwiseQuotient(bv.cwiseProduct(bv)));
  });
  return Var(&t, id);
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double c) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(c * a.val(),
                  [ia, c](Tape& tp, const Mat& g) { tp.accumulate(ia, c * g); });
  return Var(&t, id);
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().array() + c,
                  [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, g); });
  return Var(&t, id);
}

Var square(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().cwiseProduct(a.val()), [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, 2.0 * g.cwiseProduct(tp.value(ia)));
  });
  return Var(&t, id);
}

Var abs_(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().cwiseAbs(), [ia](Tape& tp, const Mat& g) {
    Mat sign = tp.value(ia).unaryExpr([](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    tp.accumulate(ia, g.cwiseProduct(sign));
  });
  return Var(&t, id);
}

Var exp_(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().array().exp().matrix(), [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseProduct(tp.value(ia).array().exp().matrix()));
  });
  return Var(&t, id);
}

Var log_(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().array().log().matrix(), [ia](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g.cwiseQuotient(tp.value(ia)));
  });
  return Var(&t, id);
}

Var cwise_min(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "cwise_min");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val().cwiseMin(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    const Mat& av = tp.value(ia);
    const Mat& bv = tp.value(ib);
    Mat take_a = (av.array() <= bv.array()).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(take_a));
    tp.accumulate(ib, g.cwiseProduct((1.0 - take_a.array()).matrix()));
  });
  return Var(&t, id);
}

Var cwise_max(Var a, Var b) {
  Tape& t = same_tape(a, b);
  check_same_shape(a, b, "cwise_max");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val().cwiseMax(b.val()), [ia, ib](Tape& tp, const Mat& g) {
    const Mat& av = tp.value(ia);
    const Mat& bv = tp.value(ib);
    Mat take_a = (av.array() >= bv.array()).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(take_a));
    tp.accumulate(ib, g.cwiseProduct((1.0 - take_a.array()).matrix()));
  });
  return Var(&t, id);
}

Var clamp_min(Var a, double c) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().cwiseMax(c), [ia, c](Tape& tp, const Mat& g) {
    Mat pass = (tp.value(ia).array() > c).cast<double>();
    tp.accumulate(ia, g.cwiseProduct(pass));
  });
  return Var(&t, id);
}

Var sigmoid(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat s = a.val().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
  int id = t.push(std::move(s), [ia](Tape& tp, const Mat& g) {
    Mat s2 = tp.value(ia).unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    tp.accumulate(ia, g.cwiseProduct(s2.cwiseProduct((1.0 - s2.array()).matrix())));
  });
  return Var(&t, id);
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }
double gelu_bwd(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}
}  // namespace

Var gelu(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().unaryExpr([](double x) { return gelu_fwd(x); }),
                  [ia](Tape& tp, const Mat& g) {
                    Mat d = tp.value(ia).unaryExpr([](double x) { return gelu_bwd(x); });
                    tp.accumulate(ia, g.cwiseProduct(d));
                  });
  return Var(&t, id);
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("ad: matmul inner dim mismatch");
  int ia = a.id(), ib = b.id();
  int id = t.push(a.val() * b.val(), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g * tp.value(ib).transpose());
    tp.accumulate(ib, tp.value(ia).transpose() * g);
  });
  return Var(&t, id);
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(a.val().transpose(),
                  [ia](Tape& tp, const Mat& g) { tp.accumulate(ia, g.transpose()); });
  return Var(&t, id);
}

Var add_rowvec(Var m, Var row) {
  Tape& t = same_tape(m, row);
  if (row.rows() != 1 || row.cols() != m.cols()) {
    throw std::invalid_argument("ad: add_rowvec shape mismatch");
  }
  int im = m.id(), ir = row.id();
  Mat out = m.val();
  out.rowwise() += row.val().row(0);
  int id = t.push(std::move(out), [im, ir](Tape& tp, const Mat& g) {
    tp.accumulate(im, g);
    tp.accumulate(ir, g.colwise().sum());
  });
  return Var(&t, id);
}

Var block(Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index R = a.rows(), C = a.cols();
  if (r0 < 0 || c0 < 0 || r0 + nr > R || c0 + nc > C) {
    throw std::invalid_argument("ad: block out of range");
  }
  int id = t.push(a.val().block(r0, c0, nr, nc),
                  [ia, r0, c0, nr, nc, R, C](Tape& tp, const Mat& g) {
                    Mat full = Mat::Zero(R, C);
                    full.block(r0, c0, nr, nc) = g;
                    tp.accumulate(ia, full);
                  });
  return Var(&t, id);
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad: concat_rows of nothing");
  Tape& t = *parts.front().tape();
  Eigen::Index total = 0;
  Eigen::Index cols = parts.front().cols();
  for (const Var& p : parts) {
    if (p.cols() != cols) throw std::invalid_argument("ad: concat_rows col mismatch");
    total += p.rows();
  }
  Mat out(total, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.rows()) = p.val();
    ids.push_back(p.id());
    offs.push_back(r);
    r += p.rows();
  }
  int id = t.push(std::move(out), [ids, offs](Tape& tp, const Mat& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Eigen::Index nr = tp.value(ids[k]).rows();
      tp.accumulate(ids[k], g.middleRows(offs[k], nr));
    }
  });
  return Var(&t, id);
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("ad: concat_cols of nothing");
  Tape& t = *parts.front().tape();
  Eigen::Index total = 0;
  Eigen::Index rows = parts.front().rows();
  for (const Var& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("ad: concat_cols row mismatch");
    total += p.cols();
  }
  Mat out(rows, total);
  std::vector<int> ids;
  std::vector<Eigen::Index> offs;
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.val();
    ids.push_back(p.id());
    offs.push_back(c);
    c += p.cols();
  }
  int id = t.push(std::move(out), [ids, offs](Tape& tp, const Mat& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      Eigen::Index nc = tp.value(ids[k]).cols();
      tp.accumulate(ids[k], g.middleCols(offs[k], nc));
    }
  });
  return Var(&t, id);
}

Var gather_rows(Var a, const std::vector<int>& idx) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index R = a.rows(), C = a.cols();
  Mat out(static_cast<Eigen::Index>(idx.size()), C);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= R) throw std::invalid_argument("ad: gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(k)) = a.val().row(idx[k]);
  }
  int id = t.push(std::move(out), [ia, idx, R, C](Tape& tp, const Mat& g) {
    Mat full = Mat::Zero(R, C);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      full.row(idx[k]) += g.row(static_cast<Eigen::Index>(k));
    }
    tp.accumulate(ia, full);
  });
  return Var(&t, id);
}

Var sum(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat s(1, 1);
  s(0, 0) = a.val().sum();
  int id = t.push(std::move(s), [ia](Tape& tp, const Mat& g) {
    const Mat& av = tp.value(ia);
    tp.accumulate(ia, Mat::Constant(av.rows(), av.cols(), g(0, 0)));
  });
  return Var(&t, id);
}

Var mean_all(Var a) {
  double n = static_cast<double>(a.rows() * a.cols());
  return scale(sum(a), 1.0 / n);
}

namespace {
Mat softmax_rows_value(const Mat& a) {
  Mat p = a;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}
}  // namespace

Var softmax_rows(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  int id = t.push(softmax_rows_value(a.val()), [ia](Tape& tp, const Mat& g) {
    Mat p = softmax_rows_value(tp.value(ia));
    Mat d(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double dot = g.row(i).cwiseProduct(p.row(i)).sum();
      d.row(i) = p.row(i).cwiseProduct((g.row(i).array() - dot).matrix());
    }
    tp.accumulate(ia, d);
  });
  return Var(&t, id);
}

Var log_sum_exp_rows(Var a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Mat out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double m = a.val().row(i).maxCoeff();
    out(i, 0) = m + std::log((a.val().row(i).array() - m).exp().sum());
  }
  int id = t.push(std::move(out), [ia](Tape& tp, const Mat& g) {
    const Mat& av = tp.value(ia);
    Mat d(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      double m = av.row(i).maxCoeff();
      Eigen::ArrayXd e = (av.row(i).array() - m).exp();
      d.row(i) = (e / e.sum()).matrix() * g(i, 0);
    }
    tp.accumulate(ia, d);
  });
  return Var(&t, id);
}

Var pick_per_row(Var a, const std::vector<int>& col) {
  Tape& t = *a.tape();
  int ia = a.id();
  if (static_cast<Eigen::Index>(col.size()) != a.rows()) {
    throw std::invalid_argument("ad: pick_per_row needs one column index per row");
  }
  Mat out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    if (col[static_cast<std::size_t>(i)] < 0 || col[static_cast<std::size_t>(i)] >= a.cols()) {
      throw std::invalid_argument("ad: pick_per_row column out of range");
    }
    out(i, 0) = a.val()(i, col[static_cast<std::size_t>(i)]);
  }
  int id = t.push(std::move(out), [ia, col](Tape& tp, const Mat& g) {
    const Mat& av = tp.value(ia);
    Mat full = Mat::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      full(i, col[static_cast<std::size_t>(i)]) += g(i, 0);
    }
    tp.accumulate(ia, full);
  });
  return Var(&t, id);
}

Var layer_norm_rows(Var x, Var gain, Var bias, double eps) {
  Tape& t = *x.tape();
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols()) {
    throw std::invalid_argument("ad: layer_norm_rows gain/bias must be 1xD");
  }
  int ix = x.id(), ig = gain.id(), ib = bias.id();
  Eigen::Index R = x.rows(), C = x.cols();
  Mat xhat(R, C);
  Eigen::VectorXd inv_std(R);
  for (Eigen::Index i = 0; i < R; ++i) {
    double mu = x.val().row(i).mean();
    double var = (x.val().row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = (x.val().row(i).array() - mu) * is;
  }
  Mat out = (xhat.array().rowwise() * gain.val().row(0).array()).matrix();
  out.rowwise() += bias.val().row(0);
  int id = t.push(std::move(out), [ix, ig, ib, xhat, inv_std, C](Tape& tp, const Mat& g) {
    const Mat& gv = tp.value(ig);
    // d gain / d bias
    tp.accumulate(ig, (g.cwiseProduct(xhat)).colwise().sum());
    tp.accumulate(ib, g.colwise().sum());
    // dx: per row, with h = g .* gain:
    //   dx = inv_std * (h - mean(h) - xhat * mean(h .* xhat))
    Mat h = (g.array().rowwise() * gv.row(0).array()).matrix();
    Mat dx(g.rows(), C);
    double invC = 1.0 / static_cast<double>(C);
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      double mh = h.row(i).sum() * invC;
      double mhx = (h.row(i).cwiseProduct(xhat.row(i))).sum() * invC;
      dx.row(i) = inv_std(i) * (h.row(i).array() - mh - xhat.row(i).array() * mhx).matrix();
    }
    tp.accumulate(ix, dx);
  });
  return Var(&t, id);
}

Var im2col3(Var x, int stride) {
  if (stride != 1 && stride != 2) throw std::invalid_argument("ad: im2col3 stride must be 1 or 2");
  Tape& t = *x.tape();
  int ix = x.id();
  Eigen::Index T = x.rows(), D = x.cols();
  Eigen::Index T_out = (T - 1) / stride + 1;  // kernel 3, pad 1
  Mat out = Mat::Zero(T_out, 3 * D);
  for (Eigen::Index o = 0; o < T_out; ++o) {
    for (int k = 0; k < 3; ++k) {
      Eigen::Index src = static_cast<Eigen::Index>(o) * stride + k - 1;
      if (src >= 0 && src < T) out.block(o, k * D, 1, D) = x.val().row(src);
    }
  }
  int id = t.push(std::move(out), [ix, stride, T, D, T_out](Tape& tp, const Mat& g) {
    Mat dx = Mat::Zero(T, D);
    for (Eigen::Index o = 0; o < T_out; ++o) {
      for (int k = 0; k < 3; ++k) {
        Eigen::Index src = static_cast<Eigen::Index>(o) * stride + k - 1;
        if (src >= 0 && src < T) dx.row(src) += g.block(o, k * D, 1, D);
      }
    }
    tp.accumulate(ix, dx);
  });
  return Var(&t, id);
}

}  // namespace difftad::ad
