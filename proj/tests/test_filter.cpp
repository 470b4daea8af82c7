#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "rtpen/errors.hpp"
#include "rtpen/filter.hpp"
#include "test_util.hpp"

using namespace rtpen;
using ad::Tape;
using ad::Var;
using testutil::random_mat;

namespace {

Model tiny_model(uint64_t seed, int d_v = 5, int d_q = 4, int d_h = 6,
                 int n_c = 3) {
  ModelDims dims;
  dims.d_v = d_v;
  dims.d_q = d_q;
  dims.d_h = d_h;
  dims.n_c = n_c;
  dims.gru_hidden = 3;
  dims.conv_channels = 4;
  dims.conv_kernel = 3;
  return build_model(dims, seed);
}

}  // namespace

TEST_CASE("vlad with a single center sums plain residuals") {
  Model model = tiny_model(21, 5, 4, 6, /*n_c=*/1);
  Rng rng(1);
  Mat q = random_mat(rng, 3, 4);
  Tape tape;
  Var u = vlad_aggregate(tape, tape.input(q), model.filter, model);
  Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(4);
  const Mat& center = model.store.value(model.filter.centers);
  for (int i = 0; i < 3; ++i) expect += q.row(i) - center.row(0);
  CHECK((tape.val(u).row(0) - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vlad residual is zero when every word sits on its center") {
  Model model = tiny_model(22, 5, 4, 6, /*n_c=*/2);
  // make both centers identical and the queries equal to them: the
  // residual q_i - c_j vanishes regardless of the soft assignment
  Mat& centers = model.store.value(model.filter.centers);
  centers.row(1) = centers.row(0);
  Mat q(3, 4);
  for (int i = 0; i < 3; ++i) q.row(i) = centers.row(0);
  Tape tape;
  Var u = vlad_aggregate(tape, tape.input(q), model.filter, model);
  CHECK(tape.val(u).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vlad matches the straight-loop oracle") {
  for (uint64_t seed = 30; seed < 40; ++seed) {
    Model model = tiny_model(seed, 5, 4, 6, 2);
    Rng rng(seed * 3 + 1);
    Mat q = random_mat(rng, 3, 4);
    Tape tape;
    Var u = vlad_aggregate(tape, tape.input(q), model.filter, model);
    const Mat expect = oracle::vlad(
        q, model.store.value(model.filter.assign_w),
        model.store.value(model.filter.assign_b),
        model.store.value(model.filter.centers));
    CHECK(testutil::max_rel_err(tape.val(u), expect) < 1e-6);
  }
}

TEST_CASE("vlad rejects non-finite input") {
  Model model = tiny_model(23);
  Mat q = Mat::Zero(2, 4);
  q(1, 2) = std::numeric_limits<double>::quiet_NaN();
  Tape tape;
  CHECK_THROWS_AS(vlad_aggregate(tape, tape.input(q), model.filter, model),
                  NumericalError);
}

TEST_CASE("scene-frame scores: zero readout vector gives 0.5") {
  Model model = tiny_model(24);
  model.store.value(model.filter.score_v).setZero();
  Rng rng(2);
  Mat v = random_mat(rng, 4, 5);
  Mat u = random_mat(rng, 3, 4);
  Tape tape;
  Var beta = scene_frame_scores(tape, tape.input(v), tape.input(u),
                                model.filter, model);
  CHECK(tape.val(beta).isApproxToConstant(0.5));
}

TEST_CASE("scene-frame scores: all-zero inputs and params give 0.5") {
  Model model = tiny_model(25);
  model.store.value(model.filter.score_b).setZero();
  Tape tape;
  Var beta = scene_frame_scores(tape, tape.input(Mat::Zero(4, 5)),
                                tape.input(Mat::Zero(3, 4)), model.filter,
                                model);
  CHECK(tape.val(beta).isApproxToConstant(0.5));
}

TEST_CASE("scene-frame scores match the loop oracle and stay in (0,1)") {
  for (uint64_t seed = 40; seed < 50; ++seed) {
    Model model = tiny_model(seed);
    Rng rng(seed + 100);
    Mat v = random_mat(rng, 4, 5);
    Mat u = random_mat(rng, 3, 4);
    Tape tape;
    Var beta = scene_frame_scores(tape, tape.input(v), tape.input(u),
                                  model.filter, model);
    const Mat expect = oracle::pair_scores(
        v, u, model.store.value(model.filter.score_w1),
        model.store.value(model.filter.score_w2),
        model.store.value(model.filter.score_b),
        model.store.value(model.filter.score_v), /*apply_sigmoid=*/true);
    CHECK(testutil::max_rel_err(tape.val(beta), expect) < 1e-6);
    CHECK(tape.val(beta).minCoeff() > 0.0);
    CHECK(tape.val(beta).maxCoeff() < 1.0);
  }
}

TEST_CASE("normalize_scores endpoints") {
  Tape tape;
  Mat beta(3, 1);
  beta << 0.2, 0.5, 0.8;
  Var norm = normalize_scores(tape, tape.input(beta));
  CHECK(tape.val(norm)(0, 0) == doctest::Approx(0.0));
  CHECK(tape.val(norm)(1, 0) == doctest::Approx(0.5));
  CHECK(tape.val(norm)(2, 0) == doctest::Approx(1.0));

  Var flat = normalize_scores(tape, tape.input(Mat::Constant(4, 2, 0.3)));
  CHECK(tape.val(flat).isApproxToConstant(0.5));

  Mat beta2(3, 1);
  beta2 << 0.4, 0.1, 0.7;
  Var norm2 = normalize_scores(tape, tape.input(beta2));
  CHECK(tape.val(norm2)(0, 0) == doctest::Approx(0.5));
  CHECK(tape.val(norm2)(1, 0) == doctest::Approx(0.0));
  CHECK(tape.val(norm2)(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("gate identity and endpoint behavior") {
  Rng rng(3);
  Mat v = random_mat(rng, 4, 5);
  Mat norm(4, 1);
  norm << 1.0, 0.0, 0.5, 0.25;
  Tape tape;
  auto [enh, sup] = gate_streams(tape, tape.input(v), tape.input(norm));
  CHECK((tape.val(enh).row(0) - v.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(tape.val(sup).row(0).isZero());
  CHECK((tape.val(enh).row(2) - 0.5 * v.row(2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(testutil::max_abs_diff(tape.val(enh) + tape.val(sup), v) < 1e-12);
}

TEST_CASE("full filter: softmax assignments and beta~ hit 0 and 1") {
  for (uint64_t seed = 50; seed < 55; ++seed) {
    Model model = tiny_model(seed);
    Rng rng(seed);
    Mat v = random_mat(rng, 6, 5);
    Mat q = random_mat(rng, 3, 4);
    Tape tape;
    FilterOutput out = run_filter(tape, tape.input(v), tape.input(q), model);
    CHECK(tape.val(out.normalized_scores).minCoeff() == doctest::Approx(0.0));
    CHECK(tape.val(out.normalized_scores).maxCoeff() == doctest::Approx(1.0));
    CHECK(testutil::max_abs_diff(
              tape.val(out.enhanced) + tape.val(out.suppressed), v) < 1e-12);
  }
}

TEST_CASE("filter gradients match finite differences") {
  Model model = tiny_model(60);
  Rng rng(61);
  const Mat v = random_mat(rng, 5, 5);
  const Mat q = random_mat(rng, 3, 4);
  const Mat probe = random_mat(rng, 5, 5);

  const auto build = [&](Tape& tape) {
    FilterOutput out = run_filter(tape, tape.input(v), tape.input(q), model);
    // a scalar functional touching both streams and the score matrix
    Var mixed = tape.add(tape.cmul(out.enhanced, tape.input(probe)),
                         tape.scale(out.suppressed, 0.3));
    Var score_part = tape.mean_all(out.score_matrix);
    return tape.add(tape.sum_all(mixed), tape.scale(score_part, 2.0));
  };
  const auto loss = [&]() {
    Tape tape;
    return tape.scalar(build(tape));
  };

  Tape tape;
  Var total = build(tape);
  tape.backward(total);
  std::vector<Mat> analytic(static_cast<size_t>(model.store.count()));
  tape.collect_param_grads(analytic);

  const double worst =
      testutil::fd_worst_rel_err(model.store, analytic, loss, 1e-5);
  CHECK(worst < 1e-3);
}
