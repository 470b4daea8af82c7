#include "rtpen/tape.hpp"

#include <cmath>

#include "rtpen/errors.hpp"

namespace rtpen::ad {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Mat& Tape::g(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

Var Tape::input(Mat value) {
  Node n;
  n.op = Op::kInput;
  n.val = std::move(value);
  return {push(std::move(n))};
}

Var Tape::input_scalar(double value) {
  Mat m(1, 1);
  m(0, 0) = value;
  return input(std::move(m));
}

Var Tape::param(int pid, const Mat& value) {
  Node n;
  n.op = Op::kParam;
  n.i0 = pid;
  n.val = value;
  return {push(std::move(n))};
}

Var Tape::matmul(Var a, Var b, bool trans_a, bool trans_b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.i0 = trans_a;
  n.i1 = trans_b;
  if (!trans_a && !trans_b) {
    require(A.cols() == B.rows(), "matmul: inner dim");
    n.val = A * B;
  } else if (!trans_a && trans_b) {
    require(A.cols() == B.cols(), "matmul: inner dim (bT)");
    n.val = A * B.transpose();
  } else if (trans_a && !trans_b) {
    require(A.rows() == B.rows(), "matmul: inner dim (aT)");
    n.val = A.transpose() * B;
  } else {
    require(A.rows() == B.cols(), "matmul: inner dim (aT,bT)");
    n.val = A.transpose() * B.transpose();
  }
  return {push(std::move(n))};
}

Var Tape::add(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "add: shape");
  Node n;
  n.op = Op::kAdd;
  n.a = a.id;
  n.b = b.id;
  n.val = val(a) + val(b);
  return {push(std::move(n))};
}

Var Tape::sub(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "sub: shape");
  Node n;
  n.op = Op::kSub;
  n.a = a.id;
  n.b = b.id;
  n.val = val(a) - val(b);
  return {push(std::move(n))};
}

Var Tape::cmul(Var a, Var b) {
  require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
          "cmul: shape");
  Node n;
  n.op = Op::kCMul;
  n.a = a.id;
  n.b = b.id;
  n.val = val(a).cwiseProduct(val(b));
  return {push(std::move(n))};
}

Var Tape::affine_const(Var a, double scale, double shift) {
  Node n;
  n.op = Op::kAffineConst;
  n.a = a.id;
  n.x0 = scale;
  n.x1 = shift;
  n.val = (val(a).array() * scale + shift).matrix();
  return {push(std::move(n))};
}

Var Tape::add_rowvec(Var m, Var row) {
  require(val(row).rows() == 1 && val(row).cols() == val(m).cols(),
          "add_rowvec: shape");
  Node n;
  n.op = Op::kAddRowVec;
  n.a = m.id;
  n.b = row.id;
  n.val = val(m).rowwise() + val(row).row(0);
  return {push(std::move(n))};
}

Var Tape::tanh_(Var a) {
  Node n;
  n.op = Op::kTanh;
  n.a = a.id;
  n.val = val(a).array().tanh().matrix();
  return {push(std::move(n))};
}

Var Tape::sigmoid_(Var a) {
  Node n;
  n.op = Op::kSigmoid;
  n.a = a.id;
  n.val = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
  return {push(std::move(n))};
}

Var Tape::relu(Var a) {
  Node n;
  n.op = Op::kRelu;
  n.a = a.id;
  n.val = val(a).cwiseMax(0.0);
  return {push(std::move(n))};
}

Var Tape::log_(Var a) {
  Node n;
  n.op = Op::kLog;
  n.a = a.id;
  n.val = val(a).array().log().matrix();
  return {push(std::move(n))};
}

Var Tape::softmax_rows(Var a) {
  const Mat& A = val(a);
  Mat out(A.rows(), A.cols());
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    const double mx = A.row(r).maxCoeff();
    Eigen::ArrayXd e = (A.row(r).array() - mx).exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  Node n;
  n.op = Op::kSoftmaxRows;
  n.a = a.id;
  n.val = std::move(out);
  return {push(std::move(n))};
}

Var Tape::softmax_cols(Var a) {
  const Mat& A = val(a);
  Mat out(A.rows(), A.cols());
  for (Eigen::Index c = 0; c < A.cols(); ++c) {
    const double mx = A.col(c).maxCoeff();
    Eigen::ArrayXd e = (A.col(c).array() - mx).exp();
    out.col(c) = (e / e.sum()).matrix();
  }
  Node n;
  n.op = Op::kSoftmaxCols;
  n.a = a.id;
  n.val = std::move(out);
  return {push(std::move(n))};
}

Var Tape::sum_all(Var a) {
  Node n;
  n.op = Op::kSumAll;
  n.a = a.id;
  n.val = Mat::Constant(1, 1, val(a).sum());
  return {push(std::move(n))};
}

Var Tape::mean_all(Var a) {
  Node n;
  n.op = Op::kMeanAll;
  n.a = a.id;
  n.val = Mat::Constant(1, 1, val(a).mean());
  return {push(std::move(n))};
}

Var Tape::col_sums(Var a) {
  Node n;
  n.op = Op::kColSums;
  n.a = a.id;
  n.val = val(a).colwise().sum();
  return {push(std::move(n))};
}

Var Tape::transpose(Var a) {
  Node n;
  n.op = Op::kTranspose;
  n.a = a.id;
  n.val = val(a).transpose();
  return {push(std::move(n))};
}

Var Tape::row_max(Var a) {
  const Mat& A = val(a);
  Node n;
  n.op = Op::kRowMax;
  n.a = a.id;
  n.val = Mat(A.rows(), 1);
  n.idx.resize(A.rows());
  for (Eigen::Index r = 0; r < A.rows(); ++r) {
    Eigen::Index c;
    n.val(r, 0) = A.row(r).maxCoeff(&c);
    n.idx[r] = static_cast<int>(c);
  }
  return {push(std::move(n))};
}

Var Tape::minmax_norm(Var col) {
  const Mat& v = val(col);
  require(v.cols() == 1, "minmax_norm: column vector");
  Node n;
  n.op = Op::kMinMaxNorm;
  n.a = col.id;
  Eigen::Index imax = 0, imin = 0;
  const double mx = v.col(0).maxCoeff(&imax);
  const double mn = v.col(0).minCoeff(&imin);
  n.idx = {static_cast<int>(imin), static_cast<int>(imax)};
  if (mx == mn) {
    n.flag = true;  // degenerate: constant 0.5, zero gradient
    n.val = Mat::Constant(v.rows(), 1, 0.5);
  } else {
    n.val = ((v.array() - mn) / (mx - mn)).matrix();
  }
  return {push(std::move(n))};
}

Var Tape::row_scale(Var m, Var scales) {
  require(val(scales).cols() == 1 && val(scales).rows() == val(m).rows(),
          "row_scale: shape");
  Node n;
  n.op = Op::kRowScale;
  n.a = m.id;
  n.b = scales.id;
  n.val = val(m).array().colwise() * val(scales).col(0).array();
  return {push(std::move(n))};
}

Var Tape::scale_by_scalar(Var m, Var s) {
  require(val(s).rows() == 1 && val(s).cols() == 1, "scale_by_scalar: scalar");
  Node n;
  n.op = Op::kScaleByScalar;
  n.a = m.id;
  n.b = s.id;
  n.val = val(m) * val(s)(0, 0);
  return {push(std::move(n))};
}

Var Tape::gather_rows(Var m, std::vector<int> rows) {
  const Mat& A = val(m);
  Node n;
  n.op = Op::kGatherRows;
  n.a = m.id;
  n.val = Mat::Zero(static_cast<Eigen::Index>(rows.size()), A.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= 0) n.val.row(static_cast<Eigen::Index>(i)) = A.row(rows[i]);
  }
  n.idx = std::move(rows);
  return {push(std::move(n))};
}

Var Tape::stack_rows(const std::vector<Var>& rows) {
  require(!rows.empty(), "stack_rows: empty");
  const Eigen::Index cols = val(rows[0]).cols();
  Node n;
  n.op = Op::kStackRows;
  n.val = Mat(static_cast<Eigen::Index>(rows.size()), cols);
  n.ins.reserve(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    require(val(rows[i]).rows() == 1 && val(rows[i]).cols() == cols,
            "stack_rows: each input [1,c]");
    n.val.row(static_cast<Eigen::Index>(i)) = val(rows[i]).row(0);
    n.ins.push_back(rows[i].id);
  }
  return {push(std::move(n))};
}

Var Tape::concat_cols(Var a, Var b) {
  require(val(a).rows() == val(b).rows(), "concat_cols: rows");
  Node n;
  n.op = Op::kConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.val = Mat(val(a).rows(), val(a).cols() + val(b).cols());
  n.val << val(a), val(b);
  n.i0 = static_cast<int>(val(a).cols());
  return {push(std::move(n))};
}

Var Tape::row_replace(Var m, Var row, std::vector<int> rows) {
  require(val(row).rows() == 1 && val(row).cols() == val(m).cols(),
          "row_replace: shape");
  Node n;
  n.op = Op::kRowReplace;
  n.a = m.id;
  n.b = row.id;
  n.val = val(m);
  for (int r : rows) n.val.row(r) = val(row).row(0);
  n.idx = std::move(rows);
  return {push(std::move(n))};
}

Var Tape::attn_scores(Var a, Var b, Var bias, Var w) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  const Mat& bs = val(bias);
  const Mat& wv = val(w);
  const Eigen::Index dh = A.cols();
  require(B.cols() == dh && bs.rows() == 1 && bs.cols() == dh &&
              wv.rows() == dh && wv.cols() == 1,
          "attn_scores: shapes");
  const Eigen::Index rows = A.rows(), cols = B.rows();
  Node n;
  n.op = Op::kAttnScores;
  n.a = a.id;
  n.b = b.id;
  n.c = bias.id;
  n.d = w.id;
  n.val = Mat(rows, cols);
  n.saved = Mat(rows * cols, dh);  // tanh activations, row (i*cols + j)
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      Eigen::RowVectorXd t =
          (A.row(i) + B.row(j) + bs.row(0)).array().tanh().matrix();
      n.saved.row(i * cols + j) = t;
      n.val(i, j) = t.dot(wv.col(0));
    }
  }
  return {push(std::move(n))};
}

Var Tape::moment_map(Var m, const std::vector<std::pair<int, int>>& cells,
                     int n_v) {
  const Mat& M = val(m);
  require(M.rows() == n_v, "moment_map: n_v");
  const Eigen::Index d = M.cols();
  Mat prefix = Mat::Zero(n_v + 1, d);
  for (int i = 0; i < n_v; ++i) prefix.row(i + 1) = prefix.row(i) + M.row(i);
  Node n;
  n.op = Op::kMomentMap;
  n.a = m.id;
  n.i0 = n_v;
  n.val = Mat::Zero(static_cast<Eigen::Index>(n_v) * n_v, d);
  n.idx.reserve(cells.size() * 2);
  for (const auto& [a, b] : cells) {
    n.val.row(static_cast<Eigen::Index>(a) * n_v + b) =
        prefix.row(b + 1) - prefix.row(a);
    n.idx.push_back(a);
    n.idx.push_back(b);
  }
  return {push(std::move(n))};
}

Var Tape::conv2d_same(Var map, Var kernel, Var bias, int height, int width,
                      int ksize, const std::vector<int>& rows_out) {
  const Mat& X = val(map);
  const Mat& K = val(kernel);
  const Mat& B = val(bias);
  require(X.rows() == static_cast<Eigen::Index>(height) * width,
          "conv2d: map rows");
  const Eigen::Index cin = X.cols();
  const Eigen::Index cout = K.rows();
  require(K.cols() == cin * ksize * ksize, "conv2d: kernel cols");
  require(B.rows() == 1 && B.cols() == cout, "conv2d: bias");
  const int pad = (ksize - 1) / 2;

  Node n;
  n.op = Op::kConv2dSame;
  n.a = map.id;
  n.b = kernel.id;
  n.c = bias.id;
  n.i0 = height;
  n.i1 = width;
  n.i2 = ksize;
  n.idx = rows_out;

  // im2col over requested output rows only
  Mat cols(static_cast<Eigen::Index>(rows_out.size()), cin * ksize * ksize);
  cols.setZero();
  for (size_t r = 0; r < rows_out.size(); ++r) {
    const int out_row = rows_out[r];
    const int oy = out_row / width;
    const int ox = out_row % width;
    for (int ky = 0; ky < ksize; ++ky) {
      const int iy = oy + ky - pad;
      if (iy < 0 || iy >= height) continue;
      for (int kx = 0; kx < ksize; ++kx) {
        const int ix = ox + kx - pad;
        if (ix < 0 || ix >= width) continue;
        cols.block(static_cast<Eigen::Index>(r), (ky * ksize + kx) * cin, 1,
                   cin) = X.row(static_cast<Eigen::Index>(iy) * width + ix);
      }
    }
  }
  Mat out_rows = cols * K.transpose();
  out_rows.rowwise() += B.row(0);
  n.val = Mat::Zero(X.rows(), cout);
  for (size_t r = 0; r < rows_out.size(); ++r)
    n.val.row(rows_out[r]) = out_rows.row(static_cast<Eigen::Index>(r));
  n.saved = std::move(cols);
  return {push(std::move(n))};
}

Var Tape::cosine(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  require(A.rows() == B.rows() && A.cols() == B.cols(), "cosine: shape");
  const double na = A.norm();
  const double nb = B.norm();
  Node n;
  n.op = Op::kCosine;
  n.a = a.id;
  n.b = b.id;
  if (na == 0.0 || nb == 0.0) {
    n.flag = true;  // zero-norm: cos treated as 0, zero gradient
    n.val = Mat::Zero(1, 1);
  } else {
    n.val = Mat::Constant(1, 1, (A.array() * B.array()).sum() / (na * nb));
    n.x0 = na;
    n.x1 = nb;
  }
  return {push(std::move(n))};
}

void Tape::backward(Var from) {
  require(val(from).rows() == 1 && val(from).cols() == 1,
          "backward: scalar output");
  g(from.id)(0, 0) = 1.0;
  for (int id = from.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) continue;  // not on any path to the output
    const Mat& go = n.grad;
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatMul: {
        const Mat& A = nodes_[n.a].val;
        const Mat& B = nodes_[n.b].val;
        if (!n.i0 && !n.i1) {
          g(n.a) += go * B.transpose();
          g(n.b) += A.transpose() * go;
        } else if (!n.i0 && n.i1) {
          g(n.a) += go * B;
          g(n.b) += go.transpose() * A;
        } else if (n.i0 && !n.i1) {
          g(n.a) += B * go.transpose();
          g(n.b) += A * go;
        } else {
          g(n.a) += B.transpose() * go.transpose();
          g(n.b) += go.transpose() * A.transpose();
        }
        break;
      }
      case Op::kAdd:
        g(n.a) += go;
        g(n.b) += go;
        break;
      case Op::kSub:
        g(n.a) += go;
        g(n.b) -= go;
        break;
      case Op::kCMul:
        g(n.a) += go.cwiseProduct(nodes_[n.b].val);
        g(n.b) += go.cwiseProduct(nodes_[n.a].val);
        break;
      case Op::kAffineConst:
        g(n.a) += go * n.x0;
        break;
      case Op::kAddRowVec:
        g(n.a) += go;
        g(n.b) += go.colwise().sum();
        break;
      case Op::kTanh:
        g(n.a) +=
            (go.array() * (1.0 - n.val.array() * n.val.array())).matrix();
        break;
      case Op::kSigmoid:
        g(n.a) +=
            (go.array() * n.val.array() * (1.0 - n.val.array())).matrix();
        break;
      case Op::kRelu:
        g(n.a) += (go.array() * (n.val.array() > 0.0).cast<double>()).matrix();
        break;
      case Op::kLog:
        g(n.a) += (go.array() / nodes_[n.a].val.array()).matrix();
        break;
      case Op::kSoftmaxRows: {
        Mat& ga = g(n.a);
        for (Eigen::Index r = 0; r < n.val.rows(); ++r) {
          const double dot = go.row(r).cwiseProduct(n.val.row(r)).sum();
          ga.row(r) +=
              ((go.row(r).array() - dot) * n.val.row(r).array()).matrix();
        }
        break;
      }
      case Op::kSoftmaxCols: {
        Mat& ga = g(n.a);
        for (Eigen::Index c = 0; c < n.val.cols(); ++c) {
          const double dot = go.col(c).cwiseProduct(n.val.col(c)).sum();
          ga.col(c) +=
              ((go.col(c).array() - dot) * n.val.col(c).array()).matrix();
        }
        break;
      }
      case Op::kSumAll:
        g(n.a).array() += go(0, 0);
        break;
      case Op::kMeanAll:
        g(n.a).array() += go(0, 0) / static_cast<double>(nodes_[n.a].val.size());
        break;
      case Op::kColSums:
        g(n.a).rowwise() += go.row(0);
        break;
      case Op::kTranspose:
        g(n.a) += go.transpose();
        break;
      case Op::kRowMax: {
        Mat& ga = g(n.a);
        for (Eigen::Index r = 0; r < n.val.rows(); ++r)
          ga(r, n.idx[r]) += go(r, 0);
        break;
      }
      case Op::kMinMaxNorm: {
        if (n.flag) break;  // constant in the degenerate case
        const Mat& v = nodes_[n.a].val;
        const int imin = n.idx[0], imax = n.idx[1];
        const double range = v(imax, 0) - v(imin, 0);
        const double s1 = go.sum();
        const double s2 = go.cwiseProduct(n.val).sum();
        Mat& ga = g(n.a);
        ga += go / range;
        ga(imin, 0) += (s2 - s1) / range;
        ga(imax, 0) -= s2 / range;
        break;
      }
      case Op::kRowScale: {
        const Mat& M = nodes_[n.a].val;
        const Mat& s = nodes_[n.b].val;
        g(n.a) += (go.array().colwise() * s.col(0).array()).matrix();
        g(n.b).col(0) += go.cwiseProduct(M).rowwise().sum();
        break;
      }
      case Op::kScaleByScalar: {
        g(n.a) += go * nodes_[n.b].val(0, 0);
        g(n.b)(0, 0) += go.cwiseProduct(nodes_[n.a].val).sum();
        break;
      }
      case Op::kGatherRows: {
        Mat& ga = g(n.a);
        for (size_t i = 0; i < n.idx.size(); ++i)
          if (n.idx[i] >= 0)
            ga.row(n.idx[i]) += go.row(static_cast<Eigen::Index>(i));
        break;
      }
      case Op::kStackRows:
        for (size_t i = 0; i < n.ins.size(); ++i)
          g(n.ins[i]) += go.row(static_cast<Eigen::Index>(i));
        break;
      case Op::kConcatCols:
        g(n.a) += go.leftCols(n.i0);
        g(n.b) += go.rightCols(go.cols() - n.i0);
        break;
      case Op::kRowReplace: {
        Mat ga_in = go;
        Mat& gr = g(n.b);
        for (int r : n.idx) {
          gr += go.row(r);
          ga_in.row(r).setZero();
        }
        g(n.a) += ga_in;
        break;
      }
      case Op::kAttnScores: {
        const Eigen::Index rows = n.val.rows(), colsn = n.val.cols();
        const Eigen::Index dh = n.saved.cols();
        const Mat& wv = nodes_[n.d].val;
        Mat ga = Mat::Zero(rows, dh);
        Mat gb = Mat::Zero(colsn, dh);
        Eigen::RowVectorXd gbias = Eigen::RowVectorXd::Zero(dh);
        Eigen::VectorXd gw = Eigen::VectorXd::Zero(dh);
        for (Eigen::Index i = 0; i < rows; ++i) {
          for (Eigen::Index j = 0; j < colsn; ++j) {
            const double gd = go(i, j);
            if (gd == 0.0) continue;
            const auto t = n.saved.row(i * colsn + j).array();
            gw += gd * n.saved.row(i * colsn + j).transpose();
            Eigen::RowVectorXd dt =
                (gd * wv.col(0).transpose().array() * (1.0 - t * t)).matrix();
            ga.row(i) += dt;
            gb.row(j) += dt;
            gbias += dt;
          }
        }
        g(n.a) += ga;
        g(n.b) += gb;
        g(n.c) += gbias;
        g(n.d) += gw;
        break;
      }
      case Op::kMomentMap: {
        const int n_v = n.i0;
        const Eigen::Index d = n.val.cols();
        Mat diff = Mat::Zero(n_v + 1, d);
        for (size_t k = 0; k < n.idx.size(); k += 2) {
          const int a = n.idx[k], b = n.idx[k + 1];
          const auto row = go.row(static_cast<Eigen::Index>(a) * n_v + b);
          diff.row(a) += row;
          diff.row(b + 1) -= row;
        }
        Mat& ga = g(n.a);
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(d);
        for (int i = 0; i < n_v; ++i) {
          acc += diff.row(i);
          ga.row(i) += acc;
        }
        break;
      }
      case Op::kConv2dSame: {
        const int height = n.i0, width = n.i1, ksize = n.i2;
        const int pad = (ksize - 1) / 2;
        const Eigen::Index cin = nodes_[n.a].val.cols();
        Mat go_rows(static_cast<Eigen::Index>(n.idx.size()), n.val.cols());
        for (size_t r = 0; r < n.idx.size(); ++r)
          go_rows.row(static_cast<Eigen::Index>(r)) = go.row(n.idx[r]);
        g(n.b) += go_rows.transpose() * n.saved;
        g(n.c) += go_rows.colwise().sum();
        // col2im: scatter-add kernel-weighted output grads back to the map
        Mat dcols = go_rows * nodes_[n.b].val;  // [R, Cin*K*K]
        Mat& ga = g(n.a);
        for (size_t r = 0; r < n.idx.size(); ++r) {
          const int out_row = n.idx[r];
          const int oy = out_row / width;
          const int ox = out_row % width;
          for (int ky = 0; ky < ksize; ++ky) {
            const int iy = oy + ky - pad;
            if (iy < 0 || iy >= height) continue;
            for (int kx = 0; kx < ksize; ++kx) {
              const int ix = ox + kx - pad;
              if (ix < 0 || ix >= width) continue;
              ga.row(static_cast<Eigen::Index>(iy) * width + ix) +=
                  dcols.block(static_cast<Eigen::Index>(r),
                              (ky * ksize + kx) * cin, 1, cin);
            }
          }
        }
        break;
      }
      case Op::kCosine: {
        if (n.flag) break;
        const Mat& A = nodes_[n.a].val;
        const Mat& B = nodes_[n.b].val;
        const double cosv = n.val(0, 0);
        const double gd = go(0, 0);
        g(n.a) += gd * (B / (n.x0 * n.x1) - (cosv / (n.x0 * n.x0)) * A);
        g(n.b) += gd * (A / (n.x0 * n.x1) - (cosv / (n.x1 * n.x1)) * B);
        break;
      }
    }
  }
}

void Tape::collect_param_grads(std::vector<Mat>& grads_by_pid) const {
  for (const Node& n : nodes_) {
    if (n.op != Op::kParam || n.grad.size() == 0) continue;
    Mat& dst = grads_by_pid[static_cast<size_t>(n.i0)];
    if (dst.size() == 0)
      dst = n.grad;
    else
      dst += n.grad;
  }
}

}  // namespace rtpen::ad
