#ifndef RTPEN_TESTS_TEST_UTIL_HPP
#define RTPEN_TESTS_TEST_UTIL_HPP

#include <cmath>
#include <functional>

#include "rtpen/model.hpp"
#include "rtpen/rng.hpp"
#include "rtpen/tape.hpp"

namespace testutil {

using rtpen::Mat;

inline Mat random_mat(rtpen::Rng& rng, int rows, int cols, double scale = 1.0) {
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
  return m;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

inline double max_rel_err(const Mat& a, const Mat& b) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      const double denom =
          std::max({std::abs(a(r, c)), std::abs(b(r, c)), 1e-12});
      worst = std::max(worst, std::abs(a(r, c) - b(r, c)) / denom);
    }
  return worst;
}

// Central finite differences of `loss()` against every entry of every
// parameter in the store; returns the worst relative error against the
// provided analytic gradients.
inline double fd_worst_rel_err(
    rtpen::ParamStore& store, const std::vector<Mat>& analytic,
    const std::function<double()>& loss, double step = 1e-5,
    double grad_floor = 1e-8) {
  double worst = 0.0;
  for (int pid = 0; pid < store.count(); ++pid) {
    Mat& value = store.value(pid);
    const bool have_analytic =
        static_cast<size_t>(pid) < analytic.size() &&
        analytic[static_cast<size_t>(pid)].size() != 0;
    for (Eigen::Index r = 0; r < value.rows(); ++r) {
      for (Eigen::Index c = 0; c < value.cols(); ++c) {
        const double saved = value(r, c);
        value(r, c) = saved + step;
        const double up = loss();
        value(r, c) = saved - step;
        const double down = loss();
        value(r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double an =
            have_analytic ? analytic[static_cast<size_t>(pid)](r, c) : 0.0;
        const double denom = std::max({std::abs(fd), std::abs(an), grad_floor});
        worst = std::max(worst, std::abs(fd - an) / denom);
      }
    }
  }
  return worst;
}

}  // namespace testutil

#endif  // RTPEN_TESTS_TEST_UTIL_HPP
