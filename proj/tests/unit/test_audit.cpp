#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "matformer/audit.hpp"
#include "matformer/graph.hpp"
#include "matformer/synthetic.hpp"

using namespace matformer;

namespace {

Crystal cubic_one() {
  PositionMatrix p(1, 3);
  p << 0, 0, 0;
  return Crystal(Mat3::Identity(), p, {1});
}

std::vector<double> all_distances(const CrystalGraph& g) {
  std::vector<double> d;
  for (const Edge& e : g.edges) d.push_back(e.distance);
  std::sort(d.begin(), d.end());
  return d;
}

/// Chiral arrangement: four atoms on a twisted path in an orthorhombic box.
Crystal chiral_cell() {
  PositionMatrix p(4, 3);
  p << 0.1, 0.1, 0.1, 1.3, 0.2, 0.4, 1.5, 1.4, 0.9, 2.6, 1.7, 2.1;
  return Crystal(lattice_from_parameters(3.3, 3.7, 4.1, 90, 90, 90), p, {6, 7, 8, 16});
}

}  // namespace

TEST_CASE("signatures ignore node and edge order", "[audit]") {
  Rng rng(2);
  const Crystal c = random_crystal(rng);
  CrystalGraph g = build_radius_graph(c);
  CrystalGraph h = g;
  std::reverse(h.edges.begin(), h.edges.end());
  CHECK(signature_discrepancy(graph_signature(g), graph_signature(h)) == 0.0);
}

TEST_CASE("signature discrepancy detects a changed distance", "[audit]") {
  CrystalGraph g = build_radius_graph(cubic_one());
  CrystalGraph h = g;
  h.edges[0].distance += 1e-6;
  const double d = signature_discrepancy(graph_signature(g), graph_signature(h));
  CHECK(d > 1e-9);
  h.edges.pop_back();
  CHECK(std::isinf(signature_discrepancy(graph_signature(g), graph_signature(h))));
}

TEST_CASE("radius graph passes the periodic audit", "[audit]") {
  const auto corpus = random_corpus(50, 101);
  PeriodicAuditOptions shifts_only;
  const AuditReport with_self = audit_periodic_invariance(radius_builder(12, true), "radius+self", corpus, 20, 7,
                                                          shifts_only);
  CHECK(with_self.trials == 1000);
  CHECK(with_self.violations == 0);
  CHECK_FALSE(with_self.witness.has_value());

  PeriodicAuditOptions supercells;
  supercells.alphas = {{1, 1, 1}, {2, 1, 1}, {1, 2, 1}, {1, 1, 2}, {2, 2, 1}};
  const auto small = random_corpus(15, 103);
  const AuditReport r = audit_periodic_invariance(radius_builder(12, false), "radius", small, 8, 9, supercells);
  CHECK(r.violations == 0);
}

TEST_CASE("t-fully-connected passes the boundary-shift audit", "[audit]") {
  const auto corpus = random_corpus(30, 107);
  const AuditReport r = audit_periodic_invariance(tfc_builder(3), "tfc", corpus, 10, 11);
  CHECK(r.violations == 0);
}

TEST_CASE("E(3) audit", "[audit]") {
  const auto corpus = random_corpus(20, 109);
  const AuditReport r = audit_e3_invariance(radius_builder(), "radius", corpus, 10, 13);
  CHECK(r.violations == 0);
  CHECK(r.worst_discrepancy < 1e-9);

  SECTION("identity transform gives exact equality") {
    for (const Crystal& c : corpus) {
      const auto a = graph_signature(build_radius_graph(c));
      const auto b = graph_signature(build_radius_graph(apply_e3(c, E3Transform::identity())));
      CHECK(signature_discrepancy(a, b) == 0.0);
    }
  }
  SECTION("mirror image of a chiral cell") {
    const Crystal c = chiral_cell();
    Mat3 mirror = Mat3::Identity();
    mirror(2, 2) = -1.0;
    const auto a = graph_signature(add_self_connecting_edges(build_radius_graph(c), c));
    const Crystal m = apply_e3(c, E3Transform(mirror, Vec3::Zero()));
    const auto b = graph_signature(add_self_connecting_edges(build_radius_graph(m), m));
    CHECK(signature_discrepancy(a, b) < 1e-9);
  }
}

TEST_CASE("ocgraph node and edge counts", "[audit]") {
  const CrystalGraph g = ocgraph_builder(cubic_one(), 1.1);
  CHECK(g.num_nodes() == 7);
  CHECK(g.edges.size() == 2 * 21);

  const CrystalGraph tiny = ocgraph_builder(random_corpus(1, 5)[0], 1e-3);
  const std::size_t n = random_corpus(1, 5)[0].size();
  CHECK(tiny.num_nodes() == n);
  CHECK(tiny.edges.size() == n * (n - 1));
  CHECK_THROWS(ocgraph_builder(cubic_one(), 0.0));
}

TEST_CASE("ocgraph changes under a boundary shift", "[audit]") {
  const Crystal c = boundary_pair_crystal();
  const CrystalGraph a = ocgraph_builder(c, 0.5);
  const CrystalGraph b = ocgraph_builder(shift_boundary(c, frac_to_cart(Vec3(0.05, 0, 0), c.lattice())), 0.5);
  CHECK(a.num_nodes() != b.num_nodes());

  const auto corpus = adversarial_corpus();
  const AuditReport r = audit_periodic_invariance(
      [](const Crystal& x) { return ocgraph_builder(x, 0.5); }, "ocgraph", corpus, 20, 3);
  CHECK(r.violations > 0);
  REQUIRE(r.witness.has_value());
  CHECK(r.witness->find("lattice") != std::string::npos);
  CHECK(audit_report_json(r).find("\"witness\"") != std::string::npos);
}

TEST_CASE("distance-only kNN", "[audit]") {
  SECTION("no tie at the cut is deterministic") {
    const Crystal c = cubic_one();
    std::vector<Crystal> one{c};
    const AuditReport r = audit_determinism(
        [](const Crystal& x, std::uint64_t s) { return knn_distance_only_builder(x, 6, s); }, "knn6", one, 8, 1);
    CHECK(r.violations == 0);
  }
  SECTION("a tie across species at the cut is flagged") {
    std::vector<Crystal> ties{tie_crystal()};
    const AuditReport r = audit_determinism(
        [](const Crystal& x, std::uint64_t s) { return knn_distance_only_builder(x, 12, s); }, "knn12", ties, 8, 1);
    CHECK(r.violations > 0);
    CHECK(r.witness.has_value());

    std::set<std::vector<int>> species_multisets;
    for (std::uint64_t s = 0; s < 8; ++s) {
      const CrystalGraph g = knn_distance_only_builder(tie_crystal(), 12, s);
      std::vector<int> z;
      for (const Edge& e : g.edges)
        if (e.dst == 0) z.push_back(g.node_atomic_numbers[static_cast<std::size_t>(e.src)]);
      std::sort(z.begin(), z.end());
      species_multisets.insert(z);
    }
    CHECK(species_multisets.size() > 1);
  }
  SECTION("k past every tie matches t-fully-connected distances") {
    const auto knn = all_distances(knn_distance_only_builder(cubic_one(), 18, 4));
    const auto tfc = all_distances(build_t_fully_connected(cubic_one(), 18));
    REQUIRE(knn.size() == tfc.size());
    for (std::size_t k = 0; k < knn.size(); ++k) CHECK(std::abs(knn[k] - tfc[k]) < 1e-12);
  }
}

TEST_CASE("audit report invariants", "[audit]") {
  AuditReport ok{"x", 5, 0, 0.0, std::nullopt};
  CHECK(audit_report_json(ok).find("\"witness\": null") != std::string::npos);
  CHECK(audit_report_summary(ok).find("violations=0") != std::string::npos);
}

TEST_CASE("line graph sizes", "[audit]") {
  CHECK(line_graph_size(1) == LineGraphSize{6, 66});
  CHECK(line_graph_size(10) == LineGraphSize{60, 660});
  CHECK(explicit_line_graph_size(regular_multigraph(4, 12)) == line_graph_size(4));
  for (int n = 2; n <= 8; ++n) {
    for (int degree : {2, 4, 6, 12}) {
      CHECK(explicit_line_graph_size(regular_multigraph(n, degree)) == line_graph_size(n, degree));
    }
  }
  CHECK_THROWS(regular_multigraph(4, 3));
}
