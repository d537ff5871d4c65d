#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rcpred/regress.hpp"
#include "rcpred/rng.hpp"
#include "support.hpp"

using namespace rcpred;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixXd random_matrix(Index n, Index d, Rng& rng) {
  MatrixXd x(n, d);
  for (Index j = 0; j < d; ++j)
    for (Index i = 0; i < n; ++i) x(i, j) = rng.normal();
  return x;
}

double lambda_max_of(const MatrixXd& x, const VectorXd& y) {
  const Index n = x.rows();
  const VectorXd yc = y.array() - y.mean();
  double m = 0.0;
  for (Index j = 0; j < x.cols(); ++j) {
    VectorXd col = x.col(j).array() - x.col(j).mean();
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) m = std::max(m, std::abs(col.dot(yc)) / (n * sd));
  }
  return m;
}

}  // namespace

TEST_CASE("lasso soft-thresholds a single standardized feature") {
  // x has population variance 1 and (1/n) x'(y - ybar) = 0.8 by construction;
  // the closed-form solution at lambda = 0.3 is S(0.8, 0.3) = 0.5.
  MatrixXd x(4, 1);
  x << -1, -1, 1, 1;
  VectorXd y = 0.8 * x.col(0);
  CHECK(oracles::soft_threshold(0.8, 0.3) == 0.5);

  const auto fit = regress::lasso_fit(x, y, 0.3, regress::RegressorSpec{});
  REQUIRE(fit.coefficients.size() == 1);
  CHECK_THAT(fit.coefficients(0), Catch::Matchers::WithinAbs(0.5, 1e-9));
  CHECK_THAT(fit.intercept, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("lasso shrinks everything to zero at lambda_max") {
  Rng rng(21);
  const auto x = random_matrix(40, 6, rng);
  VectorXd y = x.col(0) - 2.0 * x.col(3);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.1 * rng.normal();

  const double lmax = lambda_max_of(x, y);
  const auto fit =
      regress::lasso_fit(x, y, lmax * 1.000001, regress::RegressorSpec{});
  CHECK(fit.coefficients.isZero(0.0));
  CHECK_THAT(fit.intercept, Catch::Matchers::WithinAbs(y.mean(), 1e-12));
}

TEST_CASE("lasso at lambda zero matches the normal-equations oracle") {
  Rng rng(33);
  const Index n = 50, d = 3;
  const auto x = random_matrix(n, d, rng);
  VectorXd y = 1.5 * x.col(0) - 0.5 * x.col(2);
  for (Index i = 0; i < n; ++i) y(i) += 0.3 * rng.normal();

  const auto oracle = oracles::ols(x, y);
  const auto fit = regress::lasso_fit(x, y, 0.0, regress::RegressorSpec{});
  for (Index j = 0; j < d; ++j)
    CHECK_THAT(fit.coefficients(j),
               Catch::Matchers::WithinRel(oracle.coefficients(j), 1e-6));
  CHECK_THAT(fit.intercept,
             Catch::Matchers::WithinAbs(oracle.intercept, 1e-6));

  // Residuals on the training data are orthogonal to the columns.
  const VectorXd r = y - fit.predict(x);
  for (Index j = 0; j < d; ++j) {
    VectorXd col = x.col(j).array() - x.col(j).mean();
    CHECK(std::abs(col.dot(r)) / static_cast<double>(n) < 1e-6);
  }
}

TEST_CASE("lasso satisfies KKT conditions on random problems") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = static_cast<Index>(20 + rng.below(181));
    const Index d = static_cast<Index>(2 + rng.below(49));
    const auto x = random_matrix(n, d, rng);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) y(i) = rng.normal();
    const Index k = std::min<Index>(d, 5);
    for (Index j = 0; j < k; ++j)
      y += (rng.uniform01() * 4.0 - 2.0) * x.col(j);

    const double lambda = rng.uniform01() * lambda_max_of(x, y);
    const auto fit = regress::lasso_fit(x, y, lambda, regress::RegressorSpec{});
    const auto kkt = regress::kkt_residual(fit, x, y);
    CHECK(kkt.max_zero_violation <= 1e-6);
    CHECK(kkt.max_active_violation <= 1e-6);
  }
}

TEST_CASE("lasso L1 norm shrinks monotonically in lambda") {
  Rng rng(55);
  const auto x = random_matrix(80, 12, rng);
  VectorXd y = 2.0 * x.col(1) - x.col(4) + 0.5 * x.col(9);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.5 * rng.normal();

  const double lmax = lambda_max_of(x, y);
  double previous_l1 = -1.0;
  for (int g = 0; g < 30; ++g) {
    const double lambda =
        lmax * std::pow(1e-3, static_cast<double>(g) / 29.0);
    const auto fit = regress::lasso_fit(x, y, lambda, regress::RegressorSpec{});
    const double l1 = fit.coefficients.cwiseProduct(fit.column_scale)
                          .cwiseAbs()
                          .sum();
    CHECK(l1 >= previous_l1 - 1e-8);
    previous_l1 = l1;
  }
}

TEST_CASE("response shifts move predictions by exactly the constant") {
  Rng rng(91);
  const auto x = random_matrix(60, 5, rng);
  VectorXd y = x.col(0) - x.col(2);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.4 * rng.normal();
  const auto queries = random_matrix(15, 5, rng);
  const double c = 3.25;

  SECTION("lasso_fit") {
    const auto base = regress::lasso_fit(x, y, 0.05, regress::RegressorSpec{});
    const auto shifted =
        regress::lasso_fit(x, VectorXd(y.array() + c), 0.05,
                           regress::RegressorSpec{});
    const VectorXd delta = shifted.predict(queries) - base.predict(queries);
    for (Index i = 0; i < delta.size(); ++i)
      CHECK_THAT(delta(i), Catch::Matchers::WithinAbs(c, 1e-10));
  }

  SECTION("lasso_cv") {
    regress::RegressorSpec spec;
    spec.cv_folds = 5;
    const auto base = regress::lasso_cv(x, y, spec, 3);
    const auto shifted =
        regress::lasso_cv(x, VectorXd(y.array() + c), spec, 3);
    const VectorXd delta = shifted.predict(queries) - base.predict(queries);
    for (Index i = 0; i < delta.size(); ++i)
      CHECK_THAT(delta(i), Catch::Matchers::WithinAbs(c, 1e-10));
  }

  SECTION("knn") {
    regress::RegressorSpec spec;
    spec.family = regress::Family::knn;
    spec.neighbors = 7;
    const auto base = regress::knn_fit(x, y, spec);
    const auto shifted = regress::knn_fit(x, VectorXd(y.array() + c), spec);
    const VectorXd delta = shifted.predict(queries) - base.predict(queries);
    for (Index i = 0; i < delta.size(); ++i)
      CHECK_THAT(delta(i), Catch::Matchers::WithinAbs(c, 1e-10));
  }
}

TEST_CASE("zero-variance columns get zero coefficients without error") {
  Rng rng(17);
  MatrixXd x = random_matrix(30, 3, rng);
  x.col(1).setConstant(4.0);
  VectorXd y = 2.0 * x.col(0);

  const auto fit = regress::lasso_fit(x, y, 0.01, regress::RegressorSpec{});
  CHECK(fit.coefficients(1) == 0.0);
  CHECK_THAT(fit.coefficients(0), Catch::Matchers::WithinAbs(2.0, 1e-2));
}

TEST_CASE("non-finite inputs are rejected") {
  MatrixXd x(3, 1);
  x << 1, 2, std::numeric_limits<double>::quiet_NaN();
  VectorXd y(3);
  y << 1, 2, 3;
  CHECK_THROWS_AS(regress::lasso_fit(x, y, 0.1, regress::RegressorSpec{}),
                  DomainError);
  regress::RegressorSpec knn_spec;
  knn_spec.family = regress::Family::knn;
  knn_spec.neighbors = 1;
  CHECK_THROWS_AS(regress::knn_fit(x, y, knn_spec), DomainError);
}

TEST_CASE("lasso_cv recovers a noiseless linear signal") {
  Rng rng(101);
  const auto x = random_matrix(120, 8, rng);
  const VectorXd y = 2.0 * x.col(1) - 3.0 * x.col(5);

  regress::RegressorSpec spec;
  const auto fit = regress::lasso_cv(x, y, spec, 5);
  CHECK_THAT(fit.coefficients(1), Catch::Matchers::WithinAbs(2.0, 1e-2));
  CHECK_THAT(fit.coefficients(5), Catch::Matchers::WithinAbs(-3.0, 1e-2));
  const double mse =
      (fit.predict(x) - y).squaredNorm() / static_cast<double>(y.size());
  CHECK(mse < 1e-4);
}

TEST_CASE("lasso_cv with a single-value grid equals lasso_fit") {
  Rng rng(61);
  const auto x = random_matrix(50, 4, rng);
  VectorXd y = x.col(0) + 0.5 * x.col(3);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.2 * rng.normal();

  regress::RegressorSpec spec;
  spec.lambda_grid = {0.07};
  const auto cv = regress::lasso_cv(x, y, spec, 9);
  const auto direct = regress::lasso_fit(x, y, 0.07, spec);
  CHECK(cv.chosen_lambda == 0.07);
  CHECK(cv.coefficients == direct.coefficients);
  CHECK(cv.intercept == direct.intercept);
}

TEST_CASE("lasso_cv breaks ties toward the larger lambda") {
  Rng rng(71);
  const auto x = random_matrix(40, 3, rng);
  VectorXd y = x.col(0);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.1 * rng.normal();

  // Both grid values exceed every fold's lambda_max, so both give the null
  // model and identical CV error.
  const double big = 10.0 * lambda_max_of(x, y);
  regress::RegressorSpec spec;
  spec.lambda_grid = {3.0 * big, 2.0 * big};
  const auto fit = regress::lasso_cv(x, y, spec, 13);
  CHECK(fit.chosen_lambda == 3.0 * big);
}

TEST_CASE("knn with k = n predicts the global mean") {
  Rng rng(31);
  const auto x = random_matrix(20, 2, rng);
  VectorXd y(20);
  for (Index i = 0; i < 20; ++i) y(i) = rng.normal();

  regress::RegressorSpec spec;
  spec.family = regress::Family::knn;
  spec.neighbors = 20;
  const auto fit = regress::knn_fit(x, y, spec);
  const auto pred = fit.predict(random_matrix(5, 2, rng));
  for (Index i = 0; i < pred.size(); ++i)
    CHECK_THAT(pred(i), Catch::Matchers::WithinAbs(y.mean(), 1e-12));
}

TEST_CASE("knn with k = 1 returns the nearest row's response") {
  MatrixXd x(3, 1);
  x << 0.0, 5.0, 10.0;
  VectorXd y(3);
  y << 1.0, 2.0, 3.0;
  regress::RegressorSpec spec;
  spec.family = regress::Family::knn;
  spec.neighbors = 1;
  spec.standardize = false;
  const auto fit = regress::knn_fit(x, y, spec);

  MatrixXd q(1, 1);
  q << 5.2;
  CHECK(fit.predict(q)(0) == 2.0);
  q << 0.0;
  CHECK(fit.predict(q)(0) == 1.0);  // query equal to a training row
}

TEST_CASE("knn distance ties go to the lower row index") {
  MatrixXd x(2, 1);
  x << 0.0, 2.0;
  VectorXd y(2);
  y << 10.0, 20.0;
  regress::RegressorSpec spec;
  spec.family = regress::Family::knn;
  spec.neighbors = 1;
  spec.standardize = false;
  const auto fit = regress::knn_fit(x, y, spec);
  MatrixXd q(1, 1);
  q << 1.0;  // equidistant from both rows
  CHECK(fit.predict(q)(0) == 10.0);
}

TEST_CASE("knn rejects more neighbors than rows") {
  MatrixXd x(3, 1);
  x << 1, 2, 3;
  VectorXd y(3);
  y << 1, 2, 3;
  regress::RegressorSpec spec;
  spec.family = regress::Family::knn;
  spec.neighbors = 4;
  CHECK_THROWS_AS(regress::knn_fit(x, y, spec), InvalidArgument);
}

TEST_CASE("knn default neighbor count follows the n^0.7 rule") {
  Rng rng(41);
  const auto x = random_matrix(100, 2, rng);
  VectorXd y(100);
  for (Index i = 0; i < 100; ++i) y(i) = rng.normal();
  regress::RegressorSpec spec;
  spec.family = regress::Family::knn;
  const auto fit = regress::knn_fit(x, y, spec);
  CHECK(fit.neighbors ==
        static_cast<int>(std::ceil(std::pow(100.0, 0.7) / 5.0)));
}

TEST_CASE("predict validates input width") {
  Rng rng(81);
  const auto x = random_matrix(30, 4, rng);
  VectorXd y = x.col(0);
  const auto fit = regress::lasso_fit(x, y, 0.1, regress::RegressorSpec{});
  CHECK_THROWS_AS(fit.predict(random_matrix(5, 3, rng)), InvalidArgument);
}

TEST_CASE("predict is a pure function of model and input") {
  Rng rng(87);
  const auto x = random_matrix(40, 3, rng);
  VectorXd y = x.col(0) - x.col(1);
  const auto fit = regress::lasso_fit(x, y, 0.02, regress::RegressorSpec{});
  const auto q = random_matrix(10, 3, rng);
  CHECK(fit.predict(q) == fit.predict(q));
}

TEST_CASE("feature_subset restricts which columns the model sees") {
  Rng rng(97);
  const auto x = random_matrix(60, 5, rng);
  VectorXd y = 2.0 * x.col(1) - x.col(3);
  for (Index i = 0; i < y.size(); ++i) y(i) += 0.1 * rng.normal();

  regress::RegressorSpec subset_spec;
  subset_spec.feature_subset = {1, 3};
  const auto sub_fit = regress::lasso_fit(x, y, 0.01, subset_spec);
  REQUIRE(sub_fit.coefficients.size() == 2);

  MatrixXd manual(60, 2);
  manual.col(0) = x.col(1);
  manual.col(1) = x.col(3);
  const auto manual_fit =
      regress::lasso_fit(manual, y, 0.01, regress::RegressorSpec{});
  CHECK(sub_fit.coefficients == manual_fit.coefficients);
  CHECK(sub_fit.intercept == manual_fit.intercept);

  // predict takes the full-width matrix and applies the subset itself.
  const auto q = random_matrix(7, 5, rng);
  MatrixXd q_manual(7, 2);
  q_manual.col(0) = q.col(1);
  q_manual.col(1) = q.col(3);
  CHECK(sub_fit.predict(q) == manual_fit.predict(q_manual));

  regress::RegressorSpec bad;
  bad.feature_subset = {9};
  CHECK_THROWS_AS(regress::lasso_fit(x, y, 0.01, bad), InvalidArgument);
}

TEST_CASE("regressor spec validation") {
  regress::RegressorSpec ascending;
  ascending.lambda_grid = {0.1, 0.5};
  CHECK_THROWS_AS(regress::validate(ascending), InvalidArgument);

  regress::RegressorSpec negative;
  negative.lambda_grid = {-0.5};
  CHECK_THROWS_AS(regress::validate(negative), InvalidArgument);

  regress::RegressorSpec folds;
  folds.cv_folds = 1;
  CHECK_THROWS_AS(regress::validate(folds), InvalidArgument);
}
