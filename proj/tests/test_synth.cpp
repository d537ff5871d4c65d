#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "rcpred/synth.hpp"
#include "support.hpp"

using namespace rcpred;
using core::Index;
using core::MatrixXd;
using core::TargetTreatment;
using core::VectorXd;
using synth::DgpConfig;

namespace {

DgpConfig small_base() {
  DgpConfig c;
  c.n = 500;
  c.d_v = 6;
  c.d_z = 4;
  c.k_v = 3;
  c.k_z = 2;
  c.rho = 0.0;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("config validation catches invariant violations") {
  DgpConfig c = small_base();
  c.k_v = 7;  // > d_v
  CHECK_THROWS_AS(synth::validate(c), ConfigError);

  c = small_base();
  c.k_z = 5;  // > d_z
  CHECK_THROWS_AS(synth::validate(c), ConfigError);

  c = small_base();
  c.rho = 1.5;
  CHECK_THROWS_AS(synth::validate(c), ConfigError);

  c = small_base();
  c.misspecified = true;
  c.rho = 0.25;
  CHECK_THROWS_AS(synth::validate(c), ConfigError);

  c = small_base();
  c.misspecified = true;
  c.d_v = 7;  // odd
  CHECK_THROWS_AS(synth::validate(c), ConfigError);

  CHECK_THROWS_AS(synth::generate_misspec(small_base()), ConfigError);
  DgpConfig mis = small_base();
  mis.misspecified = true;
  CHECK_THROWS_AS(synth::generate(mis), ConfigError);
}

TEST_CASE("rho zero gives unit coefficient and nu = sum of k_v columns") {
  DgpConfig c = small_base();
  const auto data = synth::generate(c);
  for (Index i = 0; i < 20; ++i) {
    const double manual = data.table.v.row(i).head(c.k_v).sum();
    CHECK_THAT(data.nu_true(i), Catch::Matchers::WithinAbs(manual, 1e-12));
  }
  // oracle_nu with the first k_v coordinates at one, rest zero, gives k_v.
  MatrixXd v = MatrixXd::Zero(1, c.d_v);
  v.leftCols(c.k_v).setOnes();
  CHECK(synth::oracle_nu(c, v)(0) == static_cast<double>(c.k_v));
}

TEST_CASE("rho one makes Z equal V and removes confounding") {
  DgpConfig c = small_base();
  c.rho = 1.0;
  const auto data = synth::generate(c);
  CHECK(data.table.z == data.table.v.leftCols(c.d_z));
  for (Index i = 0; i < data.table.n(); ++i)
    CHECK_THAT(data.mu_true(i),
               Catch::Matchers::WithinAbs(data.nu_true(i), 1e-12));
}

TEST_CASE("identification: conditional mean of mu matches closed-form nu") {
  for (double rho : {0.0, 0.25, 0.9}) {
    DgpConfig c = small_base();
    c.rho = rho;
    Rng rng(500 + static_cast<unsigned>(rho * 100));
    const Index draws = 40000;
    for (int rep = 0; rep < 4; ++rep) {
      VectorXd v(c.d_v);
      for (Index j = 0; j < c.d_v; ++j) v(j) = rng.normal();

      const double z_sd = std::sqrt(1.0 - rho * rho);
      MatrixXd v_row = v.transpose();
      MatrixXd z_row(1, c.d_z);
      std::vector<double> mus;
      mus.reserve(draws);
      for (Index m = 0; m < draws; ++m) {
        for (Index j = 0; j < c.d_z; ++j)
          z_row(0, j) = rho * v(j) + z_sd * rng.normal();
        mus.push_back(synth::oracle_mu(c, v_row, z_row)(0));
      }
      const double mc = oracles::mean(mus);
      const double se = oracles::standard_error(mus);
      const double nu = synth::oracle_nu(c, v_row)(0);
      CHECK(std::abs(mc - nu) <= 4.0 * se);
    }
  }
}

TEST_CASE("misspecified DGP squares the upper half of V exactly") {
  DgpConfig c;
  c.n = 200;
  c.d_v = 8;
  c.d_z = 3;
  c.k_v = 4;
  c.k_z = 2;
  c.misspecified = true;
  c.seed = 3;
  const auto data = synth::generate_misspec(c);
  for (Index j = 0; j < c.d_v / 2; ++j)
    CHECK(data.table.v.col(c.d_v / 2 + j) ==
          data.table.v.col(j).array().square().matrix());
}

TEST_CASE("misspecified nu sign rule: odd one-based terms get +1") {
  DgpConfig c;
  c.n = 1;
  c.d_v = 8;
  c.d_z = 2;
  c.k_v = 4;
  c.k_z = 1;
  c.misspecified = true;
  MatrixXd v = MatrixXd::Zero(1, c.d_v);
  v(0, 0) = 1.0;  // V_1 = 1: contribution 1 + (+1) * 1 = 2
  CHECK(synth::oracle_nu(c, v)(0) == 2.0);
  v.setZero();
  v(0, 1) = 1.0;  // V_2 = 1: contribution 1 + (-1) * 1 = 0
  CHECK(synth::oracle_nu(c, v)(0) == 0.0);
}

TEST_CASE("misspecified mean of nu matches the analytic moment oracle") {
  DgpConfig c;
  c.n = 1000000;
  c.d_v = 8;
  c.d_z = 2;
  c.k_v = 6;
  c.k_z = 1;
  c.misspecified = true;
  c.seed = 29;
  const auto data = synth::generate_misspec(c);

  // E[nu] = sum over i <= k_v/2 of sign_i * E[V^2]; the linear terms have
  // mean zero. Signs alternate starting at +1 for i = 1.
  double analytic = 0.0;
  for (Index i = 1; i <= c.k_v / 2; ++i)
    analytic += (i % 2 == 1 ? 1.0 : -1.0);
  const double mc = data.nu_true.mean();
  const double se = std::sqrt((data.nu_true.array() - mc).square().sum() /
                              static_cast<double>(c.n - 1)) /
                    std::sqrt(static_cast<double>(c.n));
  CHECK(std::abs(mc - analytic) <= 4.0 * se);
}

TEST_CASE("positivity: generated propensities are strictly inside (0,1)") {
  DgpConfig c = small_base();
  c.n = 20000;
  const auto data = synth::generate(c);
  CHECK(data.pi_true.minCoeff() > 0.0);
  CHECK(data.pi_true.maxCoeff() < 1.0);
}

TEST_CASE("correlation of shared (V_i, Z_i) pairs matches rho") {
  DgpConfig c;
  c.n = 100000;
  c.d_v = 3;
  c.d_z = 3;
  c.k_v = 2;
  c.k_z = 2;
  c.rho = 0.25;
  c.seed = 13;
  const auto data = synth::generate(c);
  for (Index j = 0; j < 3; ++j) {
    const VectorXd v = data.table.v.col(j);
    const VectorXd z = data.table.z.col(j);
    const double vc = v.mean(), zc = z.mean();
    const double cov = ((v.array() - vc) * (z.array() - zc)).mean();
    const double r = cov / std::sqrt((v.array() - vc).square().mean() *
                                     (z.array() - zc).square().mean());
    CHECK_THAT(r, Catch::Matchers::WithinAbs(0.25, 0.02));
  }
}

TEST_CASE("signal-to-noise ratio is two") {
  DgpConfig c = small_base();
  c.n = 10000;
  const auto data = synth::generate(c);
  const double mu_mean = data.mu_true.mean();
  const double var_mu = (data.mu_true.array() - mu_mean).square().mean();
  const double ratio = var_mu / data.noise_variance;
  CHECK(ratio >= 1.8);
  CHECK(ratio <= 2.2);
}

TEST_CASE("consistency: targeted rows carry Y = Y^a bit-exactly") {
  DgpConfig c = small_base();
  c.n = 2000;
  const auto data = synth::generate(c);
  int targeted = 0, matching_untargeted = 0;
  for (Index i = 0; i < c.n; ++i) {
    if (data.table.a[static_cast<std::size_t>(i)] == c.target) {
      ++targeted;
      REQUIRE(data.table.y(i) == data.y_potential(i));
    } else if (data.table.y(i) == data.y_potential(i)) {
      ++matching_untargeted;
    }
  }
  CHECK(targeted > 0);
  CHECK(matching_untargeted == 0);
}

TEST_CASE("generation is bit-identical for identical configs") {
  DgpConfig c = small_base();
  const auto a = synth::generate(c);
  const auto b = synth::generate(c);
  CHECK(a.table.v == b.table.v);
  CHECK(a.table.z == b.table.z);
  CHECK(a.table.y == b.table.y);
  CHECK(a.table.a == b.table.a);
  CHECK(a.y_potential == b.y_potential);
  CHECK(a.noise_variance == b.noise_variance);

  std::ostringstream sa, sb;
  synth::write_sidecar(a, c, sa);
  synth::write_sidecar(b, c, sb);
  CHECK(sa.str() == sb.str());
}

TEST_CASE("zero noise scale produces exact potential outcomes") {
  DgpConfig c = small_base();
  c.noise_scale = 0.0;
  const auto data = synth::generate(c);
  CHECK(data.noise_variance == 0.0);
  CHECK(data.y_potential == data.mu_true);
}

TEST_CASE("mc_omega: no hidden terms means exactly zero bias") {
  DgpConfig c = small_base();
  c.k_z = 0;
  const auto res = synth::mc_omega(c, VectorXd::Ones(c.d_v),
                                   TargetTreatment(1), 2000, 7);
  CHECK(std::abs(res.bias) <= 1e-12);
}

TEST_CASE("mc_omega: perfect correlation removes confounding") {
  DgpConfig c = small_base();
  c.rho = 1.0;
  Rng rng(23);
  VectorXd v(c.d_v);
  for (Index j = 0; j < c.d_v; ++j) v(j) = rng.normal();
  const auto res = synth::mc_omega(c, v, TargetTreatment(1), 200000, 7);
  CHECK(std::abs(res.bias) <= 3.0 * res.se_bias + 1e-9);
}

TEST_CASE(
    "mc_omega matches the rejection-sampling oracle and is negative at the "
    "center point of the risk-style process") {
  DgpConfig c;
  c.n = 1;
  c.d_v = 40;
  c.d_z = 20;
  c.k_v = 10;
  c.k_z = 8;
  c.rho = 0.0;
  const VectorXd v = VectorXd::Zero(c.d_v);

  const auto is = synth::mc_omega(c, v, TargetTreatment(1), 400000, 19);
  const auto rej = oracles::rejection_omega(c, v, 1, 400000, 91);
  REQUIRE(rej.accepted > 1000);
  const double combined_se = std::hypot(is.se_omega, rej.se);
  CHECK(std::abs(is.omega - rej.omega) <= 4.0 * combined_se);

  // Treated rows are selected where the propensity index is low, so the
  // treatment-conditional mean sits below nu at the center point.
  CHECK(is.bias < 0.0);
  CHECK(is.bias + 3.0 * is.se_bias < 0.0);
  CHECK(rej.omega < 0.0);
}

TEST_CASE("mc_omega validates inputs") {
  DgpConfig c = small_base();
  CHECK_THROWS_AS(
      synth::mc_omega(c, VectorXd::Zero(c.d_v), TargetTreatment(1), 10, 1),
      InvalidArgument);
  CHECK_THROWS_AS(synth::mc_omega(c, VectorXd::Zero(c.d_v + 1),
                                  TargetTreatment(1), 2000, 1),
                  DimensionError);
}

TEST_CASE("sidecar records the full config and one row per observation") {
  DgpConfig c = small_base();
  c.n = 10;
  const auto data = synth::generate(c);
  std::ostringstream out;
  synth::write_sidecar(data, c, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line.find("# dgp") == 0);
  CHECK(line.find("d_v=6") != std::string::npos);
  CHECK(line.find("k_z=2") != std::string::npos);
  std::getline(in, line);
  CHECK(line == "nu_true,mu_true,pi_true,y_potential");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 10);
}
