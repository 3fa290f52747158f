#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <map>

#include "matformer/audit.hpp"
#include "matformer/graph.hpp"
#include "matformer/synthetic.hpp"
#include "oracles.hpp"

using namespace matformer;
using Catch::Matchers::WithinAbs;

namespace {

Crystal cubic_one(double a = 1.0) {
  PositionMatrix p(1, 3);
  p << 0, 0, 0;
  return Crystal(Mat3::Identity() * a, p, {1});
}

Mat3 hexagonal() {
  Mat3 L;
  L << 1, 0, 0, -0.5, std::sqrt(3.0) / 2.0, 0, 0, 0, 2;
  return L;
}

Crystal rock_salt_pair() {
  // Face-centred primitive cell with Na at the origin and Cl at the body centre.
  Mat3 L;
  L << 0, 2.8, 2.8, 2.8, 0, 2.8, 2.8, 2.8, 0;
  PositionMatrix p(2, 3);
  p.row(0) = frac_to_cart(Vec3(0, 0, 0), L).transpose();
  p.row(1) = frac_to_cart(Vec3(0.5, 0.5, 0.5), L).transpose();
  return Crystal(L, p, {11, 17});
}

std::vector<double> incoming_distances(const CrystalGraph& g, int node, EdgeKind kind = EdgeKind::neighbor) {
  std::vector<double> d;
  for (const Edge& e : g.edges) {
    if (e.dst == node && e.kind == kind) d.push_back(e.distance);
  }
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace

TEST_CASE("image_bound uses interplanar spacings", "[graph]") {
  CHECK(image_bound(Mat3::Identity(), std::sqrt(2.0)) == std::array<int, 3>{2, 2, 2});
  CHECK(image_bound(Mat3::Identity(), 0.5) == std::array<int, 3>{1, 1, 1});
  CHECK(image_bound(hexagonal(), 2.0)[2] == 1);
  CHECK_THROWS(image_bound(Mat3::Identity(), 0.0));
  CHECK_THROWS(image_bound(Mat3::Identity(), -1.0));
}

TEST_CASE("image_bound is complete against an exhaustive scan", "[graph]") {
  const Mat3 L = hexagonal();
  const double r = 2.0;
  const auto K = image_bound(L, r);
  PositionMatrix p(2, 3);
  p.row(0) = frac_to_cart(Vec3(0.01, 0.02, 0.03), L).transpose();
  p.row(1) = frac_to_cart(Vec3(0.98, 0.97, 0.99), L).transpose();
  const Crystal c(L, p, {6, 8});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      for (int a = -6; a <= 6; ++a)
        for (int b = -6; b <= 6; ++b)
          for (int g = -6; g <= 6; ++g) {
            if (i == j && a == 0 && b == 0 && g == 0) continue;
            const Vec3 d = c.position(j) + L.transpose() * Vec3(a, b, g) - c.position(i);
            if (d.norm() > r) continue;
            CHECK(std::abs(a) <= K[0] + 1);
            CHECK(std::abs(b) <= K[1] + 1);
            CHECK(std::abs(g) <= K[2] + 1);
          }
    }
  }
}

TEST_CASE("image distances of a unit cube", "[graph]") {
  const Crystal c = cubic_one();
  const auto d = image_distances_within(c, 0, 0, std::sqrt(3.0));
  REQUIRE(d.size() == 26);
  for (int k = 0; k < 6; ++k) CHECK_THAT(d[k].distance, WithinAbs(1.0, 1e-15));
  for (int k = 6; k < 18; ++k) CHECK_THAT(d[k].distance, WithinAbs(std::sqrt(2.0), 1e-15));
  for (int k = 18; k < 26; ++k) CHECK_THAT(d[k].distance, WithinAbs(std::sqrt(3.0), 1e-15));

  const auto oracle_d = oracle::distances_of(oracle::brute_force_images(c, 0, std::sqrt(3.0)));
  CHECK(oracle::max_abs_diff(oracle_d, [&] {
          std::vector<double> v;
          for (const auto& x : d) v.push_back(x.distance);
          return v;
        }()) < 1e-14);
}

TEST_CASE("image_distances_smallest breaks ties lexicographically", "[graph]") {
  const Crystal c = cubic_one();
  const auto d = image_distances_smallest(c, 0, 0, 3);
  REQUIRE(d.size() == 3);
  CHECK(d[0].image == LatticeImage{-1, 0, 0});
  CHECK(d[1].image == LatticeImage{0, -1, 0});
  CHECK(d[2].image == LatticeImage{0, 0, -1});
}

TEST_CASE("body-centred pair has cross distance sqrt(3)/2", "[graph]") {
  PositionMatrix p(2, 3);
  p << 0, 0, 0, 0.5, 0.5, 0.5;
  const Crystal c(Mat3::Identity(), p, {26, 26});
  const auto d = image_distances_smallest(c, 0, 1, 1);
  CHECK_THAT(d.at(0).distance, WithinAbs(std::sqrt(3.0) / 2.0, 1e-15));
}

TEST_CASE("image distances survive boundary shifts", "[graph]") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Crystal c = random_crystal(rng);
    const Crystal s = shift_boundary(c, random_corner(rng, c.lattice()));
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < c.size(); ++j) {
        const auto a = image_distances_smallest(c, i, j, 8);
        const auto b = image_distances_smallest(s, i, j, 8);
        for (int k = 0; k < 8; ++k) CHECK(std::abs(a[k].distance - b[k].distance) < 1e-10);
      }
    }
  }
}

TEST_CASE("adaptive radius", "[graph]") {
  CHECK_THAT(adaptive_radius(cubic_one(), 0), WithinAbs(std::sqrt(2.0), 1e-15));

  const Crystal big = supercell(cubic_one(), {2, 2, 2});
  for (std::size_t i = 0; i < big.size(); ++i) CHECK_THAT(adaptive_radius(big, i), WithinAbs(std::sqrt(2.0), 1e-14));

  const Crystal salt = rock_salt_pair();
  for (std::size_t i = 0; i < 2; ++i) {
    const double expected = oracle::brute_force_radius(salt, i, 12);
    CHECK_THAT(adaptive_radius(salt, i), WithinAbs(expected, 1e-12));
  }

  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const Crystal c = random_crystal(rng);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK_THAT(adaptive_radius(c, i), WithinAbs(oracle::brute_force_radius(c, i, 12), 1e-12));
    }
  }
}

TEST_CASE("radius graph of a unit cube", "[graph]") {
  const CrystalGraph g = build_radius_graph(cubic_one());
  CHECK(g.count_edges(EdgeKind::neighbor) == 18);
  const auto d = incoming_distances(g, 0);
  CHECK(std::count_if(d.begin(), d.end(), [](double x) { return std::abs(x - 1.0) < 1e-12; }) == 6);
  CHECK(std::count_if(d.begin(), d.end(), [](double x) { return std::abs(x - std::sqrt(2.0)) < 1e-12; }) == 12);
  CHECK_NOTHROW(validate_graph(g));
}

TEST_CASE("radius graph matches the brute-force oracle edge for edge", "[graph]") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const Crystal c = random_crystal(rng);
    const CrystalGraph g = build_radius_graph(c);
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double r = oracle::brute_force_radius(c, i, 12);
      const auto expected = oracle::brute_force_images(c, i, r);
      std::vector<std::tuple<int, LatticeImage>> want;
      for (const auto& im : expected) want.emplace_back(im.j, im.k);
      std::vector<std::tuple<int, LatticeImage>> got;
      for (const Edge& e : g.edges) {
        if (e.dst == static_cast<int>(i)) got.emplace_back(e.src, e.image);
      }
      std::sort(want.begin(), want.end());
      std::sort(got.begin(), got.end());
      CHECK(want == got);
    }
  }
}

TEST_CASE("radius graph is unchanged by shifts and supercells", "[graph]") {
  Rng rng(31);
  for (int trial = 0; trial < 10; ++trial) {
    const Crystal c = random_crystal(rng);
    const CrystalGraph g = build_radius_graph(c);
    const CrystalGraph shifted = build_radius_graph(shift_boundary(c, random_corner(rng, c.lattice())));
    CHECK(signature_discrepancy(graph_signature(g), graph_signature(shifted)) < 1e-9);

    const Crystal big = supercell(c, {2, 1, 1});
    const CrystalGraph gb = build_radius_graph(big);
    for (std::size_t v = 0; v < big.size(); ++v) {
      const auto ref = incoming_distances(g, big.origin_index()[v]);
      const auto got = incoming_distances(gb, static_cast<int>(v));
      CHECK(oracle::max_abs_diff(ref, got) < 1e-9);
    }
  }
}

TEST_CASE("t-fully-connected graphs", "[graph]") {
  SECTION("unit cube, t = 3") {
    const CrystalGraph g = build_t_fully_connected(cubic_one(), 3);
    REQUIRE(g.edges.size() == 3);
    for (const Edge& e : g.edges) CHECK_THAT(e.distance, WithinAbs(1.0, 1e-15));
  }
  SECTION("two atoms, t = 1") {
    PositionMatrix p(2, 3);
    p << 0.1, 0.2, 0.3, 1.4, 1.1, 0.9;
    const Crystal c(Mat3::Identity() * 2.5, p, {8, 14});
    const CrystalGraph g = build_t_fully_connected(c, 1);
    REQUIRE(g.edges.size() == 4);
    const double cross = image_distances_smallest(c, 0, 1, 1)[0].distance;
    int cross_edges = 0;
    for (const Edge& e : g.edges) {
      if (e.src != e.dst) {
        ++cross_edges;
        CHECK_THAT(e.distance, WithinAbs(cross, 1e-15));
      }
    }
    CHECK(cross_edges == 2);
  }
  SECTION("distance multiset survives boundary shifts") {
    Rng rng(37);
    for (int trial = 0; trial < 10; ++trial) {
      const Crystal c = random_crystal(rng);
      const auto a = graph_signature(build_t_fully_connected(c, 4));
      const auto b = graph_signature(build_t_fully_connected(shift_boundary(c, random_corner(rng, c.lattice())), 4));
      CHECK(signature_discrepancy(a, b) < 1e-9);
    }
  }
  CHECK_THROWS(build_t_fully_connected(cubic_one(), 0));
}

TEST_CASE("self-connecting edges", "[graph]") {
  SECTION("unit cube: every candidate is already inside the radius") {
    const CrystalGraph g = add_self_connecting_edges(build_radius_graph(cubic_one()), cubic_one());
    CHECK(g.count_edges(EdgeKind::self_connecting) == 0);
  }
  SECTION("large cube with a small radius: all six are added") {
    PositionMatrix p(2, 3);
    p << 0, 0, 0, 1, 0, 0;
    const Crystal c(Mat3::Identity() * 10.0, p, {6, 6});
    const CrystalGraph base = build_radius_graph(c, 2);
    REQUIRE(base.meta.node_radius[0] < 10.0);
    const CrystalGraph g = add_self_connecting_edges(base, c);
    CHECK(g.count_edges(EdgeKind::self_connecting) == 12);
    const auto d = incoming_distances(g, 0, EdgeKind::self_connecting);
    REQUIRE(d.size() == 6);
    for (int k = 0; k < 3; ++k) CHECK_THAT(d[k], WithinAbs(10.0, 1e-12));
    for (int k = 3; k < 6; ++k) CHECK_THAT(d[k], WithinAbs(10.0 * std::sqrt(2.0), 1e-12));
  }
  SECTION("hexagonal cell: |l1 + l2| = 1") {
    const auto six = six_lattice_distances(hexagonal());
    CHECK_THAT(six[3], WithinAbs(1.0, 1e-15));
  }
  SECTION("self edges point at the node's own image") {
    PositionMatrix p(1, 3);
    p << 0.3, 0.1, 0.2;
    const Crystal c(lattice_from_parameters(7, 8, 9, 80, 95, 110), p, {29});
    const CrystalGraph g = add_self_connecting_edges(build_radius_graph(c, 1), c);
    for (const Edge& e : g.edges) {
      if (e.kind != EdgeKind::self_connecting) continue;
      CHECK(e.src == e.dst);
      const Vec3 d = c.lattice().transpose() * e.image.as_vector();
      CHECK_THAT(e.distance, WithinAbs(d.norm(), 1e-12));
    }
  }
}

TEST_CASE("lattice_gram_from_six", "[graph]") {
  const double r2 = std::sqrt(2.0);
  const Mat3 g = lattice_gram_from_six({1, 1, 1, r2, r2, r2});
  CHECK((g - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-15);

  const Mat3 h = lattice_gram_from_six({1, 1, 2, 1, std::sqrt(5.0), std::sqrt(5.0)});
  CHECK_THAT(h(0, 1), WithinAbs(-0.5, 1e-15));
  CHECK_THAT(std::acos(h(0, 1) / std::sqrt(h(0, 0) * h(1, 1))) * 180.0 / std::numbers::pi, WithinAbs(120.0, 1e-12));

  Rng rng(41);
  std::uniform_real_distribution<double> u(-4, 4);
  for (int trial = 0; trial < 50; ++trial) {
    Mat3 L;
    do {
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) L(r, c) = u(rng);
    } while (std::abs(L.determinant()) < 1.0);
    const Mat3 rec = lattice_gram_from_six(six_lattice_distances(L));
    const Mat3 ref = L * L.transpose();
    const Eigen::Vector3d e0 = Eigen::SelfAdjointEigenSolver<Mat3>(ref).eigenvalues();
    const Eigen::Vector3d e1 = Eigen::SelfAdjointEigenSolver<Mat3>(rec).eigenvalues();
    CHECK((e0 - e1).cwiseAbs().maxCoeff() < 1e-9);
  }

  CHECK_THROWS_AS(lattice_gram_from_six({1, 1, 1, 2, 2, 0.01}), GraphError);
}

TEST_CASE("validate_graph rejects isolated nodes", "[graph]") {
  CrystalGraph g = build_radius_graph(cubic_one());
  g.edges.clear();
  CHECK_THROWS_AS(validate_graph(g), GraphError);
}

TEST_CASE("canonical edge order does not depend on input order", "[graph]") {
  Rng rng(43);
  const Crystal c = random_crystal(rng);
  CrystalGraph a = build_radius_graph(c);
  CrystalGraph b = a;
  std::shuffle(b.edges.begin(), b.edges.end(), rng);
  canonicalize_edge_order(b);
  REQUIRE(a.edges.size() == b.edges.size());
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    CHECK(a.edges[e].src == b.edges[e].src);
    CHECK(a.edges[e].dst == b.edges[e].dst);
    CHECK(a.edges[e].image == b.edges[e].image);
  }
}

TEST_CASE("batch construction equals serial construction", "[graph]") {
  const auto corpus = random_corpus(12, 47);
  const auto batch = build_graphs(corpus, radius_builder(), 3);
  REQUIRE(batch.size() == corpus.size());
  for (std::size_t k = 0; k < corpus.size(); ++k) {
    const CrystalGraph serial = add_self_connecting_edges(build_radius_graph(corpus[k]), corpus[k]);
    REQUIRE(serial.edges.size() == batch[k].edges.size());
    for (std::size_t e = 0; e < serial.edges.size(); ++e) {
      CHECK(serial.edges[e].distance == batch[k].edges[e].distance);
      CHECK(serial.edges[e].image == batch[k].edges[e].image);
    }
  }
}
