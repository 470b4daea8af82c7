#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "rtpen/rng.hpp"
#include "rtpen/tape.hpp"
#include "test_util.hpp"

using rtpen::Mat;
using rtpen::Rng;
using rtpen::ad::Tape;
using rtpen::ad::Var;
using testutil::random_mat;

namespace {

// FD-checks d(sum of graph output)/d(leaf) for a graph builder.
double fd_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                std::vector<Mat> leaves, double step = 1e-6) {
  const auto loss = [&]() {
    Tape t;
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const auto& m : leaves) vars.push_back(t.input(m));
    return t.scalar(t.sum_all(build(t, vars)));
  };

  Tape t;
  std::vector<Var> vars;
  for (const auto& m : leaves) vars.push_back(t.input(m));
  Var out = t.sum_all(build(t, vars));
  t.backward(out);

  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    const Mat analytic = t.grad(vars[li]).size() != 0
                             ? t.grad(vars[li])
                             : Mat::Zero(leaves[li].rows(), leaves[li].cols());
    for (Eigen::Index r = 0; r < leaves[li].rows(); ++r) {
      for (Eigen::Index c = 0; c < leaves[li].cols(); ++c) {
        const double saved = leaves[li](r, c);
        leaves[li](r, c) = saved + step;
        const double up = loss();
        leaves[li](r, c) = saved - step;
        const double down = loss();
        leaves[li](r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double an = analytic(r, c);
        const double denom = std::max({std::abs(fd), std::abs(an), 1e-7});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("matmul forward and gradient") {
  Rng rng(11);
  Mat a = random_mat(rng, 3, 4);
  Mat b = random_mat(rng, 4, 2);
  Tape t;
  Var va = t.input(a), vb = t.input(b);
  CHECK(testutil::max_abs_diff(t.val(t.matmul(va, vb)), a * b) < 1e-12);

  const double err = fd_check(
      [](Tape& t2, const std::vector<Var>& v) {
        return t2.matmul(v[0], v[1]);
      },
      {a, b});
  CHECK(err < 1e-6);

  const double err_t = fd_check(
      [](Tape& t2, const std::vector<Var>& v) {
        return t2.matmul(v[0], v[1], true, true);
      },
      {random_mat(rng, 4, 3), random_mat(rng, 2, 4)});
  CHECK(err_t < 1e-6);
}

TEST_CASE("elementwise ops gradients") {
  Rng rng(12);
  Mat a = random_mat(rng, 3, 5);
  Mat b = random_mat(rng, 3, 5);
  for (const char* which : {"add", "sub", "cmul", "tanh", "sigmoid", "affine"}) {
    const std::string op = which;
    const double err = fd_check(
        [op](Tape& t, const std::vector<Var>& v) {
          if (op == "add") return t.add(v[0], v[1]);
          if (op == "sub") return t.sub(v[0], v[1]);
          if (op == "cmul") return t.cmul(v[0], v[1]);
          if (op == "tanh") return t.tanh_(v[0]);
          if (op == "sigmoid") return t.cmul(t.sigmoid_(v[0]), v[1]);
          return t.affine_const(v[0], -2.5, 0.75);
        },
        {a, b});
    CAPTURE(op);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(13);
  Mat a = random_mat(rng, 4, 4);
  // keep entries well away from zero so FD sees a smooth function
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c)
      if (std::abs(a(r, c)) < 0.1) a(r, c) = 0.2;
  const double err = fd_check(
      [](Tape& t, const std::vector<Var>& v) { return t.relu(v[0]); }, {a});
  CHECK(err < 1e-6);
}

TEST_CASE("softmax rows and cols") {
  Rng rng(14);
  Mat a = random_mat(rng, 4, 6);
  Tape t;
  Var s = t.softmax_rows(t.input(a));
  for (int r = 0; r < 4; ++r)
    CHECK(std::abs(t.val(s).row(r).sum() - 1.0) < 1e-12);

  Mat weights = random_mat(rng, 4, 6);
  const double err = fd_check(
      [&](Tape& t2, const std::vector<Var>& v) {
        return t2.cmul(t2.softmax_rows(v[0]), v[1]);
      },
      {a, weights});
  CHECK(err < 1e-6);

  const double err_c = fd_check(
      [&](Tape& t2, const std::vector<Var>& v) {
        return t2.cmul(t2.softmax_cols(v[0]), v[1]);
      },
      {a, weights});
  CHECK(err_c < 1e-6);
}

TEST_CASE("reductions and broadcast ops") {
  Rng rng(15);
  Mat a = random_mat(rng, 5, 3);
  Mat row = random_mat(rng, 1, 3);
  Mat scales = random_mat(rng, 5, 1);
  Mat weights = random_mat(rng, 5, 3);

  CHECK(fd_check([](Tape& t, const std::vector<Var>& v) {
          return t.mean_all(v[0]);
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape& t, const std::vector<Var>& v) {
          return t.col_sums(v[0]);
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape& t, const std::vector<Var>& v) {
          return t.add_rowvec(v[0], v[1]);
        }, {a, row}) < 1e-6);
  CHECK(fd_check([&](Tape& t, const std::vector<Var>& v) {
          return t.cmul(t.row_scale(v[0], v[1]), t.input(weights));
        }, {a, scales}) < 1e-6);
  CHECK(fd_check([](Tape& t, const std::vector<Var>& v) {
          return t.transpose(v[0]);
        }, {a}) < 1e-6);
  CHECK(fd_check([&](Tape& t, const std::vector<Var>& v) {
          return t.scale_by_scalar(v[0], t.sum_all(v[1]));
        }, {a, scales}) < 1e-6);
}

TEST_CASE("row max and minmax normalization") {
  Mat a(4, 3);
  a << 0.1, 0.9, 0.3,
       0.5, 0.2, 0.8,
       0.7, 0.4, 0.6,
       0.05, 0.55, 0.35;
  Tape t;
  Var mx = t.row_max(t.input(a));
  CHECK(t.val(mx)(0, 0) == doctest::Approx(0.9));
  CHECK(t.val(mx)(3, 0) == doctest::Approx(0.55));

  Var norm = t.minmax_norm(mx);
  CHECK(t.val(norm).minCoeff() == doctest::Approx(0.0));
  CHECK(t.val(norm).maxCoeff() == doctest::Approx(1.0));

  Mat weights(4, 1);
  weights << 0.3, -1.2, 0.8, 0.4;
  const double err = fd_check(
      [&](Tape& t2, const std::vector<Var>& v) {
        return t2.cmul(t2.minmax_norm(t2.row_max(v[0])), t2.input(weights));
      },
      {a});
  CHECK(err < 1e-5);

  // degenerate distribution: constant output, zero gradient
  Tape t2;
  Var flat = t2.minmax_norm(t2.input(Mat::Constant(3, 1, 0.4)));
  CHECK(t2.val(flat).isApproxToConstant(0.5));
}

TEST_CASE("gather, stack, concat, replace") {
  Rng rng(16);
  Mat a = random_mat(rng, 5, 3);
  Mat row = random_mat(rng, 1, 3);

  Tape t;
  Var g = t.gather_rows(t.input(a), {4, -1, 0});
  CHECK(t.val(g).row(0) == a.row(4));
  CHECK(t.val(g).row(1).isZero());

  CHECK(fd_check([](Tape& t2, const std::vector<Var>& v) {
          return t2.gather_rows(v[0], {2, 2, 0, -1});
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape& t2, const std::vector<Var>& v) {
          return t2.concat_cols(v[0], v[1]);
        }, {a, random_mat(rng, 5, 2)}) < 1e-6);
  CHECK(fd_check([](Tape& t2, const std::vector<Var>& v) {
          std::vector<Var> rows = {t2.gather_rows(v[0], {0}),
                                   t2.gather_rows(v[0], {3}),
                                   t2.gather_rows(v[0], {3})};
          return t2.stack_rows(rows);
        }, {a}) < 1e-6);
  CHECK(fd_check([](Tape& t2, const std::vector<Var>& v) {
          return t2.row_replace(v[0], v[1], {1, 3});
        }, {a, row}) < 1e-6);
}

TEST_CASE("attention scores op matches composition and FD") {
  Rng rng(17);
  Mat a = random_mat(rng, 3, 4);
  Mat b = random_mat(rng, 2, 4);
  Mat bias = random_mat(rng, 1, 4);
  Mat w = random_mat(rng, 4, 1);

  Tape t;
  Var out = t.attn_scores(t.input(a), t.input(b), t.input(bias), t.input(w));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      Eigen::RowVectorXd pre = a.row(i) + b.row(j) + bias.row(0);
      const double expect =
          pre.array().tanh().matrix().dot(w.col(0).transpose());
      CHECK(t.val(out)(i, j) == doctest::Approx(expect));
    }

  const double err = fd_check(
      [](Tape& t2, const std::vector<Var>& v) {
        return t2.attn_scores(v[0], v[1], v[2], v[3]);
      },
      {a, b, bias, w});
  CHECK(err < 1e-6);
}

TEST_CASE("moment map op: prefix sums match and FD") {
  Rng rng(18);
  const int n_v = 5;
  Mat m = random_mat(rng, n_v, 3);
  std::vector<std::pair<int, int>> cells = {{0, 0}, {0, 4}, {1, 3}, {2, 2},
                                            {3, 4}};
  Tape t;
  Var f = t.moment_map(t.input(m), cells, n_v);
  for (const auto& [a, b] : cells) {
    Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(3);
    for (int i = a; i <= b; ++i) expect += m.row(i);
    CHECK((t.val(f).row(a * n_v + b) - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
  Mat weights = random_mat(rng, n_v * n_v, 3);
  const double err = fd_check(
      [&](Tape& t2, const std::vector<Var>& v) {
        return t2.cmul(t2.moment_map(v[0], cells, n_v), t2.input(weights));
      },
      {m});
  CHECK(err < 1e-6);
}

TEST_CASE("conv2d_same matches padding semantics and FD") {
  Rng rng(19);
  const int h = 4, w = 4, k = 3, cin = 2, cout = 3;
  Mat map = random_mat(rng, h * w, cin);
  Mat kernel = random_mat(rng, cout, cin * k * k);
  Mat bias = random_mat(rng, 1, cout);

  std::vector<int> all_rows(h * w);
  for (int i = 0; i < h * w; ++i) all_rows[i] = i;

  Tape t;
  Var out = t.conv2d_same(t.input(map), t.input(kernel), t.input(bias), h, w,
                          k, all_rows);
  // centre pixel: full 3x3 neighborhood
  double acc = bias(0, 1);
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx)
      for (int ic = 0; ic < cin; ++ic)
        acc += kernel(1, (ky * 3 + kx) * cin + ic) * map((ky + 0) * w + kx, ic);
  CHECK(t.val(out)(1 * w + 1, 1) == doctest::Approx(acc));

  Mat weights = random_mat(rng, h * w, cout);
  const double err = fd_check(
      [&](Tape& t2, const std::vector<Var>& v) {
        return t2.cmul(t2.conv2d_same(v[0], v[1], v[2], h, w, k, all_rows),
                       t2.input(weights));
      },
      {map, kernel, bias});
  CHECK(err < 1e-5);

  // sparse evaluation agrees with dense on requested rows
  std::vector<int> some_rows = {5, 6, 10};
  Tape t3;
  Var sparse = t3.conv2d_same(t3.input(map), t3.input(kernel), t3.input(bias),
                              h, w, k, some_rows);
  for (const int r : some_rows)
    CHECK((t3.val(sparse).row(r) - t.val(out).row(r)).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("cosine op analytic cases and FD") {
  Mat a(1, 3), b(1, 3);
  a << 1.0, 2.0, -1.0;
  b = 2.0 * a;
  Tape t;
  CHECK(t.scalar(t.cosine(t.input(a), t.input(b))) == doctest::Approx(1.0));
  CHECK(t.scalar(t.cosine(t.input(a), t.input(Mat(-b)))) ==
        doctest::Approx(-1.0));
  Mat orth(1, 3);
  orth << 2.0, -1.0, 0.0;
  CHECK(t.scalar(t.cosine(t.input(a), t.input(orth))) == doctest::Approx(0.0));
  CHECK(t.scalar(t.cosine(t.input(a), t.input(Mat::Zero(1, 3)))) == 0.0);

  Rng rng(20);
  const double err = fd_check(
      [](Tape& t2, const std::vector<Var>& v) {
        return t2.cosine(v[0], v[1]);
      },
      {random_mat(rng, 1, 4), random_mat(rng, 1, 4)});
  CHECK(err < 1e-6);
}

TEST_CASE("log gradient") {
  Mat a(2, 2);
  a << 0.5, 1.5, 2.0, 0.25;
  CHECK(fd_check([](Tape& t, const std::vector<Var>& v) {
          return t.log_(v[0]);
        }, {a}) < 1e-6);
}

TEST_CASE("gradient accumulates over reused subexpressions") {
  Mat a(1, 1);
  a << 0.7;
  Tape t;
  Var x = t.input(a);
  Var y = t.add(t.cmul(x, x), x);  // x^2 + x -> dy/dx = 2x + 1
  t.backward(y);
  CHECK(t.grad(x)(0, 0) == doctest::Approx(2.0 * 0.7 + 1.0));
}
