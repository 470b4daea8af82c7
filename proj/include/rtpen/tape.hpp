#ifndef RTPEN_TAPE_HPP
#define RTPEN_TAPE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

namespace rtpen {

using Mat = Eigen::MatrixXd;

namespace ad {

// Reverse-mode autodiff over dense double matrices. One Tape per forward
// pass; ops append nodes, backward() walks them in reverse. Tapes are
// independent, so concurrent passes over shared (read-only) parameter
// values are safe.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : uint8_t {
  kInput,
  kParam,
  kMatMul,        // flags i0 = transpose_a, i1 = transpose_b
  kAdd,
  kSub,
  kCMul,
  kAffineConst,   // x0 * a + x1, elementwise
  kAddRowVec,     // [r,c] + broadcast [1,c]
  kTanh,
  kSigmoid,
  kRelu,
  kLog,
  kSoftmaxRows,
  kSoftmaxCols,
  kSumAll,        // -> [1,1]
  kMeanAll,       // -> [1,1]
  kColSums,       // -> [1,c]
  kTranspose,
  kRowMax,        // -> [r,1], argmax per row saved in idx
  kMinMaxNorm,    // column vector -> column vector; 0.5 if max == min
  kRowScale,      // [r,c] rows scaled by [r,1]
  kScaleByScalar, // [r,c] * scalar var [1,1]
  kGatherRows,    // rows by idx; idx -1 yields a zero row
  kStackRows,     // n-ary, each input [1,c]
  kConcatCols,
  kRowReplace,    // rows in idx replaced by broadcast [1,c] second input
  kAttnScores,    // (A[n,dh], B[m,dh], bias[1,dh], w[dh,1]) -> [n,m]
  kMomentMap,     // ([n_v,d], cells) -> [n_v*n_v, d], rows a*n_v+b
  kConv2dSame,    // (map[H*W,Cin], kernel[Cout,Cin*K*K], bias[1,Cout])
  kCosine,        // (a, b) same shape -> [1,1]; zero norm -> 0
};

struct Node {
  Op op;
  int a = -1, b = -1, c = -1, d = -1;
  std::vector<int> ins;   // kStackRows
  std::vector<int> idx;   // gather / replace / argmax / conv rows
  int i0 = 0, i1 = 0, i2 = 0;
  double x0 = 0.0, x1 = 0.0;
  Mat val;
  Mat grad;   // allocated lazily during backward
  Mat saved;  // op-specific forward state (tanh activations, im2col, ...)
  bool flag = false;
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }

  const Mat& val(Var v) const { return nodes_[v.id].val; }
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  double scalar(Var v) const { return nodes_[v.id].val(0, 0); }
  size_t size() const { return nodes_.size(); }

  Var input(Mat value);
  Var input_scalar(double value);
  // pid tags the leaf so collect_param_grads can route gradients back.
  Var param(int pid, const Mat& value);

  Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var cmul(Var a, Var b);
  Var affine_const(Var a, double scale, double shift);
  Var neg(Var a) { return affine_const(a, -1.0, 0.0); }
  Var scale(Var a, double s) { return affine_const(a, s, 0.0); }
  Var one_minus(Var a) { return affine_const(a, -1.0, 1.0); }
  Var add_rowvec(Var m, Var row);
  Var tanh_(Var a);
  Var sigmoid_(Var a);
  Var relu(Var a);
  Var log_(Var a);
  Var softmax_rows(Var a);
  Var softmax_cols(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var col_sums(Var a);
  Var transpose(Var a);
  Var row_max(Var a);
  Var minmax_norm(Var col);
  Var row_scale(Var m, Var scales);
  Var scale_by_scalar(Var m, Var s);
  Var gather_rows(Var m, std::vector<int> rows);
  Var stack_rows(const std::vector<Var>& rows);
  Var concat_cols(Var a, Var b);
  Var row_replace(Var m, Var row, std::vector<int> rows);
  Var attn_scores(Var a, Var b, Var bias, Var w);
  Var moment_map(Var m, const std::vector<std::pair<int, int>>& cells, int n_v);
  // Same-padded KxK convolution over an HxW map stored row-major as
  // [H*W, Cin]. Output rows outside rows_out are left zero; callers must
  // only read rows whose receptive field they requested.
  Var conv2d_same(Var map, Var kernel, Var bias, int height, int width,
                  int ksize, const std::vector<int>& rows_out);
  Var cosine(Var a, Var b);

  void backward(Var from);
  // Adds each param leaf's gradient into grads_by_pid[pid].
  void collect_param_grads(std::vector<Mat>& grads_by_pid) const;

 private:
  int push(Node n);
  Mat& g(int id);

  std::vector<Node> nodes_;
};

}  // namespace ad
}  // namespace rtpen

#endif  // RTPEN_TAPE_HPP
