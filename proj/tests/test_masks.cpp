#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "tdm/error.hpp"
#include "tdm/masks.hpp"
#include "test_helpers.hpp"

using namespace tdm;

namespace {
const Dataset& gaussian_2000x10() {
  static const Dataset d(tdm::test::gaussian(2000, 10, 99));
  return d;
}

Index column_missing(const MissingMask& m, Index j) { return m.flags.col(j).cast<Index>().sum(); }
}  // namespace

TEST_CASE("MCAR rate and determinism") {
  Rng r1(5), r2(5);
  const MissingMask a = gen_mcar(1000, 10, 0.3, r1);
  const MissingMask b = gen_mcar(1000, 10, 0.3, r2);
  CHECK(a.flags == b.flags);
  // Binomial(10000, 0.3): sd = 0.0046, the band is +-4 sd.
  CHECK(a.missing_rate() >= 0.28);
  CHECK(a.missing_rate() <= 0.32);

  Rng r3(1);
  CHECK(gen_mcar(10, 10, 1e-9, r3).missing_count() == 0);
  CHECK_THROWS_AS(gen_mcar(10, 10, 0.0, r3), UsageError);
  CHECK_THROWS_AS(gen_mcar(10, 10, 1.0, r3), UsageError);
}

TEST_CASE("column guard keeps one observed cell per column") {
  Rng rng(8);
  const MissingMask m = gen_mcar(3, 50, 0.95, rng);
  for (Index j = 0; j < 50; ++j) CHECK(column_missing(m, j) < 3);
}

TEST_CASE("MAR keeps the observed columns complete and hits the rate") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    const MaskResult res = gen_mar(gaussian_2000x10(), 0.3, 0.3, rng);
    CHECK(res.observed_columns.size() == 3);
    for (Index j : res.observed_columns) CHECK(column_missing(res.mask, j) == 0);
    CHECK(std::abs(res.achieved_rate - 0.3) <= 0.005);
    CHECK(res.achieved_rate == doctest::Approx(res.mask.missing_rate()));
  }
  Rng rng(0);
  CHECK_THROWS_AS(gen_mar(Dataset(Matrix::Ones(10, 1)), 0.3, 0.3, rng), DataError);
  // All 9 remaining columns cannot reach 95% of all cells.
  CHECK_THROWS_AS(gen_mar(gaussian_2000x10(), 0.95, 0.3, rng), DataError);
}

TEST_CASE("MNAR logistic masks its own inputs and hits the rate") {
  Rng r1(3), r2(3);
  const MaskResult a = gen_mnar_logistic(gaussian_2000x10(), 0.3, r1);
  const MaskResult b = gen_mnar_logistic(gaussian_2000x10(), 0.3, r2);
  CHECK(a.mask.flags == b.mask.flags);
  CHECK(std::abs(a.achieved_rate - 0.3) <= 0.005);
  REQUIRE(!a.logistic_inputs.empty());
  Index input_missing = 0;
  for (Index j : a.logistic_inputs) input_missing += column_missing(a.mask, j);
  CHECK(input_missing > 0);
}

TEST_CASE("MNAR quantile masks only tail cells") {
  Rng rng(4);
  const Dataset& data = gaussian_2000x10();
  const MaskResult res = gen_mnar_quantile(data, 0.3, 25.0, rng);
  REQUIRE(res.candidate_prob.has_value());
  CHECK(*res.candidate_prob == doctest::Approx(0.6));
  for (Index j = 0; j < data.n_cols(); ++j) {
    std::vector<double> col(data.values.col(j).data(), data.values.col(j).data() + data.n_rows());
    const double lo = percentile(col, 25.0), hi = percentile(col, 75.0);
    for (Index i = 0; i < data.n_rows(); ++i) {
      if (res.mask.missing(i, j)) {
        const double v = data.values(i, j);
        CHECK((v < lo || v > hi));
      }
    }
  }
  CHECK(std::abs(res.achieved_rate - 0.3) <= 0.01);
  CHECK_THROWS_AS(gen_mnar_quantile(data, 0.6, 25.0, rng), UsageError);
  CHECK_THROWS_AS(gen_mnar_quantile(data, 0.3, 50.0, rng), UsageError);
}

TEST_CASE("percentile matches linear interpolation") {
  CHECK(percentile({4, 1, 3, 2}, 0) == 1.0);
  CHECK(percentile({4, 1, 3, 2}, 100) == 4.0);
  CHECK(percentile({4, 1, 3, 2}, 50) == 2.5);
  CHECK(percentile({1, 2, 3, 4, 5}, 25) == 2.0);
}

TEST_CASE("apply_mask") {
  const Dataset d(tdm::test::gaussian(4, 3, 1));
  CHECK(apply_mask(d, MissingMask(FlagMatrix::Zero(4, 3))).values == d.values);

  FlagMatrix f = FlagMatrix::Zero(4, 3);
  f.row(2).setOnes();
  f(0, 1) = 1;
  const Dataset masked = apply_mask(d, MissingMask(f));
  CHECK(masked.values.row(2).array().isNaN().all());
  CHECK(masked.values(1, 1) == d.values(1, 1));
  CHECK(derive_mask(apply_mask(d, MissingMask(FlagMatrix::Zero(4, 3)))).flags == FlagMatrix::Zero(4, 3));

  Rng rng(2);
  const MissingMask m = gen_mcar(4, 3, 0.3, rng);
  CHECK(derive_mask(apply_mask(d, m)).flags == m.flags);
  CHECK_THROWS_AS(apply_mask(d, MissingMask(FlagMatrix::Zero(3, 3))), DataError);
}

TEST_CASE("generate_mask is reproducible for every mechanism") {
  for (Mechanism mech : {Mechanism::MCAR, Mechanism::MAR, Mechanism::MNARL, Mechanism::MNARQ}) {
    MaskSpec spec;
    spec.mechanism = mech;
    spec.seed = 17;
    const MaskResult a = generate_mask(gaussian_2000x10(), spec);
    const MaskResult b = generate_mask(gaussian_2000x10(), spec);
    CHECK(a.mask.flags == b.mask.flags);
    CHECK(std::abs(a.achieved_rate - 0.3) <= 0.01);
    CHECK(parse_mechanism(to_string(mech)) == mech);
  }
  CHECK_THROWS_AS(parse_mechanism("mnar"), UsageError);
}

TEST_CASE("row masking for the synthetic protocol") {
  Rng rng(1);
  const MissingMask m = gen_row_mcar(500, 2, 0.4, rng);
  CHECK(m.missing_count() == 200);
  for (Index i = 0; i < 500; ++i) CHECK(m.flags.row(i).cast<int>().sum() <= 1);
}
