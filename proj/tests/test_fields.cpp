#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "doctest.h"
#include "dgm/fields.hpp"
#include "dgm/fixtures.hpp"
#include "dgm/operators.hpp"
#include "dgm/seeding.hpp"

using namespace dgm;

namespace {

Mesh tetrahedron() {
  Mesh m;
  m.vertices.resize(4, 3);
  m.vertices << 1, 1, 1, 1, -1, -1, -1, 1, -1, -1, -1, 1;
  m.faces.resize(4, 3);
  m.faces << 0, 1, 2, 0, 2, 3, 0, 3, 1, 1, 3, 2;
  return m;
}

Eigen::MatrixXd dense_system(const OperatorPair& ops, double t) {
  Eigen::MatrixXd A = t * Eigen::MatrixXd(ops.L);
  A.diagonal() += ops.M;
  A.diagonal().array() += ops.epsilon;
  return A;
}

} // namespace

TEST_CASE("field mode names round-trip") {
  CHECK(field_mode_from_name(field_mode_name(FieldMode::Heat)) == FieldMode::Heat);
  CHECK(field_mode_from_name("graph_geodesic") == FieldMode::GraphGeodesic);
  CHECK_THROWS_AS(field_mode_from_name("euclid"), std::invalid_argument);
}

TEST_CASE("percentile95 interpolates between order statistics") {
  Eigen::VectorXd single(1);
  single << 42.0;
  CHECK(percentile95(single) == 42.0);

  Eigen::VectorXd pair(2);
  pair << 0.0, 1.0; // h = 0.95 between the two entries
  CHECK(percentile95(pair) == doctest::Approx(0.95).epsilon(1e-12));

  Eigen::VectorXd five(5);
  five << 5.0, 1.0, 4.0, 2.0, 3.0; // sorted 1..5, h = 3.8
  CHECK(percentile95(five) == doctest::Approx(4.8).epsilon(1e-12));

  Eigen::VectorXd ramp(21); // h = 19 exactly: the 20th smallest
  for (int i = 0; i < 21; ++i) ramp(i) = static_cast<double>(i);
  CHECK(percentile95(ramp) == doctest::Approx(19.0).epsilon(1e-12));
}

TEST_CASE("heat response matches a dense resolvent on the tetrahedron") {
  OperatorPair ops = assemble(tetrahedron());
  for (double t : {0.01, 0.1}) {
    Eigen::VectorXd u = heat_response(ops, 0, t, 1);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(4);
    b(0) = 1.0;
    Eigen::VectorXd u_dense = dense_system(ops, t).ldlt().solve(b);
    CHECK((u - u_dense).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("multi-step recurrence is the dense chain") {
    const double t = 0.1;
    const int steps = 3;
    Eigen::VectorXd u = heat_response(ops, 1, t, steps);
    Eigen::MatrixXd A = dense_system(ops, t / steps);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(4);
    b(1) = 1.0;
    Eigen::VectorXd v = A.ldlt().solve(b);
    for (int j = 1; j < steps; ++j) v = A.ldlt().solve(ops.M.cwiseProduct(v).eval());
    CHECK((u - v).cwiseAbs().maxCoeff() < 1e-10);
  }

  SUBCASE("argument validation") {
    CHECK_THROWS_AS(heat_response(ops, -1, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(heat_response(ops, 4, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(heat_response(ops, 0, 0.1, 0), std::invalid_argument);
  }
}

TEST_CASE("proxy transform pins the source and flags degenerate input") {
  OperatorPair ops = assemble(make_icosphere(2));
  Eigen::VectorXd u = heat_response(ops, 7, 0.05, 1);
  bool degenerate = true;
  Eigen::VectorXd phi = proxy_transform(u, &degenerate);
  CHECK_FALSE(degenerate);

  int argmax = 0;
  u.maxCoeff(&argmax);
  CHECK(argmax == 7); // impulse response peaks at its own source
  CHECK(std::abs(phi(argmax)) < 1e-9);
  CHECK(phi.minCoeff() >= 0.0);

  SUBCASE("constant input collapses to zeros without the degenerate flag") {
    bool flag = true;
    Eigen::VectorXd out = proxy_transform(Eigen::VectorXd::Constant(10, 3.0), &flag);
    CHECK_FALSE(flag);
    CHECK(out.cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("non-positive input is degenerate and maps to zeros") {
    bool flag = false;
    Eigen::VectorXd out = proxy_transform(Eigen::VectorXd::Constant(6, -1.0), &flag);
    CHECK(flag);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);
    flag = false;
    proxy_transform(Eigen::VectorXd::Zero(6), &flag);
    CHECK(flag);
  }

  SUBCASE("non-finite input throws") {
    Eigen::VectorXd bad = Eigen::VectorXd::Ones(4);
    bad(1) = std::nan("");
    CHECK_THROWS_AS(proxy_transform(bad, nullptr), std::invalid_argument);
  }

  SUBCASE("positive rescaling leaves the field essentially unchanged") {
    Eigen::VectorXd phi2 = proxy_transform(37.0 * u, nullptr);
    CHECK((phi2 - phi).cwiseAbs().maxCoeff() < 1e-9);
  }

  SUBCASE("all clipped entries share one value") {
    Eigen::VectorXd mixed(5);
    mixed << 1.0, 0.5, -0.3, -7.0, 0.25;
    Eigen::VectorXd out = proxy_transform(mixed, nullptr);
    CHECK(out(2) == out(3)); // clip erases negative magnitudes
    CHECK(out(2) == out.maxCoeff());
  }
}

TEST_CASE("graph geodesic field reproduces the hand-computed path values") {
  EdgeGraph g;
  g.adjacency.resize(3);
  g.adjacency[0].push_back({1, 1.0});
  g.adjacency[1].push_back({0, 1.0});
  g.adjacency[1].push_back({2, 1.0});
  g.adjacency[2].push_back({1, 1.0});

  Eigen::VectorXd phi = graph_geodesic_field(g, 0, 1.0);
  // psi = log1p(d) = {0, log 2, log 3}; q95 interpolates the top pair
  double l2 = std::log(2.0), l3 = std::log(3.0);
  double q = l2 + 0.9 * (l3 - l2);
  CHECK(phi(0) == 0.0);
  CHECK(phi(1) == doctest::Approx(l2 / (q + 1e-12)).epsilon(1e-12));
  CHECK(phi(2) == doctest::Approx(l3 / (q + 1e-12)).epsilon(1e-12));

  CHECK_THROWS_AS(graph_geodesic_field(g, 0, 0.0), std::invalid_argument);

  EdgeGraph split;
  split.adjacency.resize(2); // no edges at all
  CHECK_THROWS_AS(graph_geodesic_field(split, 0, 1.0), std::invalid_argument);
}

TEST_CASE("field stacks carry one matrix per scale with seeds as columns") {
  Mesh m = make_icosphere(2);
  OperatorPair ops = assemble(m);
  SeedSet seeds = fps_euclidean_deterministic(m, 6);
  std::vector<double> scales{0.01, 0.05};
  FieldStack stack = build_field_stack(ops, seeds, scales, 1, /*retain_raw=*/true);

  REQUIRE(stack.phi.size() == 2);
  REQUIRE(stack.raw.size() == 2);
  CHECK(stack.mode == FieldMode::Heat);
  CHECK(stack.scales == scales);
  CHECK(stack.degenerate_fields == 0);
  for (const auto& phi : stack.phi) {
    CHECK(phi.rows() == m.num_vertices());
    CHECK(phi.cols() == 6);
    CHECK(phi.minCoeff() >= 0.0);
  }

  // each column is exactly the proxy transform of its retained raw response
  for (size_t si = 0; si < scales.size(); ++si)
    for (int s = 0; s < 6; ++s) {
      Eigen::VectorXd expect = proxy_transform(stack.raw[si].col(s), nullptr);
      CHECK((stack.phi[si].col(s) - expect).cwiseAbs().maxCoeff() == 0.0);
    }

  SUBCASE("raw retention is optional") {
    FieldStack lean = build_field_stack(ops, seeds, scales, 1, /*retain_raw=*/false);
    CHECK_FALSE(lean.raw_retained);
    CHECK(lean.raw.empty());
    CHECK_THROWS_AS(raw_response_stats(lean), std::logic_error);
    // and the normalized fields agree with the retaining run
    for (size_t si = 0; si < scales.size(); ++si)
      CHECK((lean.phi[si] - stack.phi[si]).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("empty seed set is rejected") {
    SeedSet none;
    CHECK_THROWS_AS(build_field_stack(ops, none, scales, 1, false), std::invalid_argument);
  }
}

TEST_CASE("field stacks are equivariant under vertex relabeling") {
  Mesh m = make_icosphere(1);
  RngStream rng(17);
  std::vector<int> perm = random_permutation(m.num_vertices(), rng);
  Mesh p = permute_vertices(m, perm);

  SeedSet seeds = fps_euclidean_deterministic(m, 5);
  SeedSet seeds_p = fps_euclidean_deterministic(p, 5);
  FieldStack a = build_field_stack(assemble(m), seeds, {0.01, 0.07}, 1, false);
  FieldStack b = build_field_stack(assemble(p), seeds_p, {0.01, 0.07}, 1, false);

  for (size_t si = 0; si < a.phi.size(); ++si)
    for (int s = 0; s < 5; ++s)
      for (int v = 0; v < m.num_vertices(); ++v)
        CHECK(b.phi[si](perm[v], s) == doctest::Approx(a.phi[si](v, s)).epsilon(1e-9));
}

TEST_CASE("geodesic stack matches the single-field function exactly") {
  Mesh m = make_icosphere(1);
  EdgeGraph g = build_edge_graph(m);
  SeedSet seeds = fps_geodesic_deterministic(m, g, 4);
  std::vector<double> scales{0.01, 0.03, 0.15};
  FieldStack stack = build_field_stack_geodesic(g, seeds, scales);

  CHECK(stack.mode == FieldMode::GraphGeodesic);
  REQUIRE(stack.phi.size() == 3);
  for (size_t si = 0; si < scales.size(); ++si)
    for (int s = 0; s < seeds.size(); ++s) {
      Eigen::VectorXd expect = graph_geodesic_field(g, seeds.indices[s], scales[si]);
      CHECK((stack.phi[si].col(s) - expect).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("proxy spread shrinks as diffusion widens") {
  OperatorPair ops = assemble(make_icosphere(2));
  double prev = std::numeric_limits<double>::infinity();
  for (double t : {0.01, 0.03, 0.07, 0.15}) {
    Eigen::VectorXd u = heat_response(ops, 3, t, 1);
    double spread = proxy_spread(u);
    CHECK(spread > 0.0);
    CHECK(spread < prev);
    prev = spread;
  }
}

TEST_CASE("raw response statistics summarize retained fields") {
  FieldStack stack;
  stack.raw_retained = true;
  Eigen::MatrixXd raw(2, 1);
  raw << -1.0, 1.0;
  stack.raw.push_back(raw);
  RawResponseStats stats = raw_response_stats(stack);
  CHECK(stats.min_response == -1.0);
  CHECK(stats.max_response == 1.0);
  CHECK(stats.mean_negative_fraction == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(stats.max_negative_fraction == doctest::Approx(0.5).epsilon(1e-12));

  SUBCASE("on a real stack negativity stays modest") {
    Mesh m = make_icosphere(2);
    FieldStack real = build_field_stack(assemble(m), fps_euclidean_deterministic(m, 4),
                                        {0.01, 0.15}, 1, true);
    RawResponseStats s = raw_response_stats(real);
    CHECK(s.max_response > 0.0);
    CHECK(s.mean_negative_fraction >= 0.0);
    CHECK(s.mean_negative_fraction <= 1.0);
  }
}
