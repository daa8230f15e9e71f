#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

namespace difftad::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Lightweight handle to a node on a Tape. Copyable; valid as long as the
// tape it came from is alive and not cleared.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Mat& val() const;
  const Mat& grad() const;
  Eigen::Index rows() const { return val().rows(); }
  Eigen::Index cols() const { return val().cols(); }
  int id() const { return id_; }
  Tape* tape() const { return tape_; }
  explicit operator bool() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Records the forward computation node by node; backward() replays it in
// reverse. Nodes are matrices; scalar results are 1x1.
class Tape {
 public:
  // backward callback receives the tape and this node's upstream gradient.
  using BackFn = std::function<void(Tape&, const Mat&)>;

  int push(Mat value, BackFn back = {});

  const Mat& value(int id) const { return values_[static_cast<std::size_t>(id)]; }
  const Mat& gradient(int id) const { return grads_[static_cast<std::size_t>(id)]; }

  // Accumulates into the gradient of node id (allocating it on first touch).
  void accumulate(int id, const Mat& g);

  // Reverse pass seeded with d(loss)/d(loss) = 1. loss must be 1x1.
  void backward(const Var& loss);

  std::size_t size() const { return values_.size(); }
  void clear();

 private:
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
  std::vector<BackFn> backs_;
  std::vector<char> touched_;
};

Var constant(Tape& t, Mat value);
Var constant_scalar(Tape& t, double value);

// --- elementwise / arithmetic ---
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // Hadamard
Var div(Var a, Var b);  // elementwise
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var square(Var a);
Var abs_(Var a);
Var exp_(Var a);
Var log_(Var a);
Var cwise_min(Var a, Var b);  // ties route gradient to a
Var cwise_max(Var a, Var b);  // ties route gradient to a
Var clamp_min(Var a, double c);

// --- activations ---
Var sigmoid(Var a);
Var gelu(Var a);

// --- linear algebra / shaping ---
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_rowvec(Var m, Var row);  // broadcast a 1xC row over all rows of m
Var block(Var a, Eigen::Index r0, Eigen::Index c0, Eigen::Index nr, Eigen::Index nc);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
Var gather_rows(Var a, const std::vector<int>& idx);
Var sum(Var a);                 // 1x1
Var mean_all(Var a);            // 1x1

// --- rowwise reductions / attention pieces ---
Var softmax_rows(Var a);
Var log_sum_exp_rows(Var a);                        // Nx1
Var pick_per_row(Var a, const std::vector<int>& col);  // Nx1, a(i, col[i])

// Rowwise layer norm with learned gain/bias (both 1xD).
Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

// Unfolds a temporal feature matrix (T x D) into (T_out x 3D) windows of
// three consecutive rows (zero padded, stride 1 or 2) so a kernel-3 1-D
// convolution becomes one matmul.
Var im2col3(Var x, int stride);

}  // namespace difftad::ad
