#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "cpla/error.hpp"
#include "cpla/sampler.hpp"
#include "test_util.hpp"

using namespace cpla;

TEST_CASE("operating range scales nominal loads") {
  const NetworkCase net = testing::load("case33bw");
  const OperatingRange r = make_range(net, 0.5, 1.5);
  const std::size_t b33 = make_bus_index(net).at(33);
  // bus 33 carries 60 kW on a 10 MVA base
  CHECK(r.pd_min[b33] == doctest::Approx(0.5 * 0.060 / 10.0));
  CHECK(r.pd_max[b33] == doctest::Approx(1.5 * 0.060 / 10.0));
  const OperatingRange point = make_range(net, 1.0, 1.0);
  CHECK(point.pd_min == point.pd_max);
  CHECK(point.qd_min == point.qd_max);
  const std::size_t b1 = make_bus_index(net).at(1);
  CHECK(r.pd_min[b1] == 0.0);
  CHECK(r.pd_max[b1] == 0.0);
  CHECK_THROWS_AS(make_range(net, 1.2, 1.1), ValidationError);
  CHECK_THROWS_AS(make_range(net, -0.1, 1.1), ValidationError);
}

TEST_CASE("draws stay in the box and are reproducible") {
  const PowerFlowModel model(testing::load("case33bw"));
  const OperatingRange r = make_range(model.network(), 0.5, 1.5);
  const RowMatrix w = draw_samples(model, r, 10000, 42);
  REQUIRE(w.rows() == 10000);
  const StateLayout& lay = model.layout();
  const auto& net = model.network();
  // every stored injection lies inside [-hi * load, -lo * load] (no generation at PQ buses)
  for (Eigen::Index s = 0; s < w.rows(); ++s) {
    for (std::size_t j = 0; j < lay.n_theta(); ++j) {
      const std::size_t i = lay.theta_buses[j];
      const double x = w(s, Eigen::Index(j));
      CHECK_MESSAGE((x >= -r.pd_max[i] - 1e-15 && x <= -r.pd_min[i] + 1e-15), "sample ", s, " bus ", net.buses[i].id);
    }
  }
  CHECK(w == draw_samples(model, r, 10000, 42));
  CHECK(w != draw_samples(model, r, 10000, 43));
  // a prefix of a larger draw is the smaller draw
  CHECK(draw_samples(model, r, 100, 42) == w.topRows(100));
}

TEST_CASE("per-coordinate means match the box midpoint") {
  const PowerFlowModel model(testing::load("case33bw"));
  const OperatingRange r = make_range(model.network(), 0.5, 1.5);
  const std::size_t s = 10000;
  const RowMatrix w = draw_samples(model, r, s, 7);
  const StateLayout& lay = model.layout();
  for (std::size_t j = 0; j < lay.n_theta(); ++j) {
    const std::size_t i = lay.theta_buses[j];
    const double width = r.pd_max[i] - r.pd_min[i];
    if (width == 0.0) continue;
    const double mid = -0.5 * (r.pd_max[i] + r.pd_min[i]);
    const double sigma = width / std::sqrt(12.0) / std::sqrt(double(s));
    CHECK(std::abs(w.col(Eigen::Index(j)).mean() - mid) <= 3 * sigma);
  }
}

TEST_CASE("counter RNG is uniform-ish and depends on every input") {
  CHECK(counter_uniform(1, 2, 3) == counter_uniform(1, 2, 3));
  CHECK(counter_uniform(1, 2, 3) != counter_uniform(2, 2, 3));
  CHECK(counter_uniform(1, 2, 3) != counter_uniform(1, 3, 3));
  CHECK(counter_uniform(1, 2, 3) != counter_uniform(1, 2, 4));
  double sum = 0;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    const double u = counter_uniform(9, i, 0);
    REQUIRE((u >= 0.0 && u < 1.0));
    sum += u;
  }
  CHECK(std::abs(sum / 100000 - 0.5) < 3 * std::sqrt(1.0 / 12 / 100000));
}

TEST_CASE("solving samples on case33bw") {
  const PowerFlowModel model(testing::load("case33bw"));
  const OperatingRange r = make_range(model.network(), 0.5, 1.5);
  SampleSolveOptions opts;
  opts.workers = 4;
  const SampleSet set = sample_case(model, r, 1000, 42, {20, 25}, opts);
  CHECK(set.dropped == 0);
  CHECK(set.size() == 1000);
  CHECK(set.solves == 1000);
  CHECK(set.values.cols() == 2);
  CHECK(set.target_column(25) == 1);
  CHECK_THROWS_AS(set.target_column(3), ValidationError);

  SUBCASE("stored values re-solve within tolerance") {
    const std::size_t b20 = make_bus_index(model.network()).at(20);
    for (Eigen::Index s = 0; s < 1000; s += 97) {
      const PowerFlowSolution sol =
          solve_power_flow(model, set.injections.row(s).transpose(), solve_nominal(model).state);
      REQUIRE(sol.converged);
      CHECK(sol.max_mismatch <= 1e-8);
      CHECK(std::abs(sol.state.vm[b20] - set.values(s, 0)) < 1e-9);
    }
  }

  SUBCASE("worker count does not change the result") {
    opts.workers = 1;
    const SampleSet serial = sample_case(model, r, 1000, 42, {20, 25}, opts);
    CHECK(serial.injections == set.injections);
    CHECK(serial.values == set.values);
  }
}

TEST_CASE("a collapsed range gives identical targets") {
  const PowerFlowModel model(testing::load("case33bw"));
  const SampleSet set = sample_case(model, make_range(model.network(), 1.0, 1.0), 20, 1, {33});
  CHECK(set.values.col(0).maxCoeff() == set.values.col(0).minCoeff());
}

TEST_CASE("infeasible ranges abort") {
  const PowerFlowModel model(testing::load("case33bw"));
  CHECK_THROWS_AS(sample_case(model, make_range(model.network(), 30.0, 40.0), 20, 1, {33}), NumericalError);
  CHECK_THROWS_AS(sample_case(model, make_range(model.network(), 0.5, 1.5), 20, 1, {999}), ValidationError);
}

TEST_CASE("sample sufficiency bound") {
  CHECK(sample_sufficiency(36, 0.01) == 295);
  CHECK(sample_sufficiency(1, 0.01) == 5);
  const std::size_t s = sample_sufficiency(36, 0.01);
  CHECK(36.0 * std::pow(1.0 - 1.0 / 36.0, double(s)) <= 0.01);
  CHECK_THROWS_AS(sample_sufficiency(0, 0.01), ValidationError);
  CHECK_THROWS_AS(sample_sufficiency(3, 1.0), ValidationError);
}

TEST_CASE("region census") {
  Breakpoints bp;
  bp.points = {{0.0}};
  bp.tmin = {-1};
  bp.tmax = {1};
  RowMatrix t(4, 1);
  t << -0.5, -0.2, 0.3, 0.0;
  RegionCensus c = region_census(t, bp);
  CHECK(c.counts == std::vector<std::size_t>{2, 2});
  CHECK(c.empties == 0);

  // fewer samples than regions must leave one empty
  Breakpoints bp2;
  bp2.points = {{1, 2}, {1, 2}};
  bp2.tmin = {0, 0};
  bp2.tmax = {3, 3};
  RowMatrix t2(8, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 3);
  for (Eigen::Index i = 0; i < t2.size(); ++i) t2.data()[i] = u(rng);
  c = region_census(t2, bp2);
  std::size_t total = 0;
  for (auto n : c.counts) total += n;
  CHECK(total == 8);
  CHECK(c.empties >= 1);
  CHECK(c.empty_regions(bp2).size() == c.empties);

  // permuting samples does not change the census
  RowMatrix flipped = t2.colwise().reverse();
  CHECK(region_census(flipped, bp2).counts == c.counts);
}

TEST_CASE("empty-region frequency at the sufficiency bound") {
  Breakpoints bp;
  bp.points = {{1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}};
  bp.tmin = {0, 0};
  bp.tmax = {6, 6};
  const double eps = 0.01;
  const std::size_t s = sample_sufficiency(36, eps);
  const int trials = 200;
  int with_empty = 0;
  for (int trial = 0; trial < trials; ++trial) {
    RowMatrix t(Eigen::Index(s), 2);
    for (Eigen::Index i = 0; i < Eigen::Index(s); ++i)
      for (Eigen::Index k = 0; k < 2; ++k) t(i, k) = 6.0 * counter_uniform(1000 + trial, std::uint64_t(i), std::uint64_t(k));
    if (region_census(t, bp).empties > 0) ++with_empty;
  }
  const double sigma = std::sqrt(eps * (1 - eps) / trials);
  CHECK(double(with_empty) / trials <= eps + 3 * sigma);
}

TEST_CASE("sample file round trip") {
  const PowerFlowModel model(testing::load("case30"));
  const SampleSet set = sample_case(model, make_range(model.network(), 0.5, 1.5), 50, 9, {20, 30});
  const auto path = (std::filesystem::temp_directory_path() / "cpla_samples_roundtrip.bin").string();
  write_samples(path, set);
  const SampleSet back = read_samples(path);
  CHECK(back.injections == set.injections);
  CHECK(back.values == set.values);
  CHECK(back.targets == set.targets);
  CHECK(back.seed == 9);
  CHECK(back.case_hash == set.case_hash);
  CHECK(back.fraction_hi == 1.5);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  CHECK_THROWS_AS(read_samples(path), ValidationError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_samples(path), IoError);
}
