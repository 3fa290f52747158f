#include "matformer/audit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "matformer/io.hpp"
#include "matformer/synthetic.hpp"

namespace matformer {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

NodeSignature node_signature_of(const CrystalGraph& graph, std::size_t node,
                                const std::vector<std::vector<std::size_t>>& incoming) {
  NodeSignature sig;
  sig.atomic_number = graph.node_atomic_numbers[node];
  sig.edges.reserve(incoming[node].size());
  for (std::size_t e : incoming[node]) {
    const Edge& edge = graph.edges[e];
    sig.edges.push_back({graph.node_atomic_numbers[static_cast<std::size_t>(edge.src)], edge.kind, edge.distance});
  }
  std::sort(sig.edges.begin(), sig.edges.end(), [](const EdgeSignature& a, const EdgeSignature& b) {
    return std::tie(a.neighbor_z, a.kind, a.distance) < std::tie(b.neighbor_z, b.kind, b.distance);
  });
  return sig;
}

// Max distance difference between two nodes, infinity on structural mismatch.
double node_discrepancy(const NodeSignature& a, const NodeSignature& b) {
  if (a.atomic_number != b.atomic_number || a.edges.size() != b.edges.size()) return kInf;
  double worst = 0.0;
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    if (a.edges[e].neighbor_z != b.edges[e].neighbor_z || a.edges[e].kind != b.edges[e].kind) return kInf;
    worst = std::max(worst, std::abs(a.edges[e].distance - b.edges[e].distance));
  }
  return worst;
}

bool signature_less(const NodeSignature& a, const NodeSignature& b) {
  if (a.atomic_number != b.atomic_number) return a.atomic_number < b.atomic_number;
  if (a.edges.size() != b.edges.size()) return a.edges.size() < b.edges.size();
  for (std::size_t e = 0; e < a.edges.size(); ++e) {
    const auto& x = a.edges[e];
    const auto& y = b.edges[e];
    if (std::tie(x.neighbor_z, x.kind, x.distance) != std::tie(y.neighbor_z, y.kind, y.distance)) {
      return std::tie(x.neighbor_z, x.kind, x.distance) < std::tie(y.neighbor_z, y.kind, y.distance);
    }
  }
  return false;
}

std::vector<std::vector<std::size_t>> incoming_edges(const CrystalGraph& graph) {
  std::vector<std::vector<std::size_t>> incoming(graph.num_nodes());
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    incoming[static_cast<std::size_t>(graph.edges[e].dst)].push_back(e);
  }
  return incoming;
}

json transform_json_shift(const Vec3& corner, const std::array<int, 3>& alpha) {
  return {{"kind", "boundary_shift"}, {"corner", {corner[0], corner[1], corner[2]}}, {"alpha", alpha}};
}

json transform_json_e3(const E3Transform& t) {
  json q = json::array();
  for (int r = 0; r < 3; ++r) q.push_back({t.rotation()(r, 0), t.rotation()(r, 1), t.rotation()(r, 2)});
  const Vec3& b = t.translation();
  return {{"kind", "e3"}, {"Q", q}, {"b", {b[0], b[1], b[2]}}};
}

std::string witness_text(const Crystal& crystal, const json& transform, double discrepancy) {
  json w;
  w["crystal"] = json::parse(write_crystal_json(crystal));
  w["transform"] = transform;
  w["discrepancy"] = std::isfinite(discrepancy) ? json(discrepancy) : json("structural");
  return w.dump();
}

// Nodes of a graph mapped to the origin atom of the crystal they came from.
std::vector<int> node_origins(const CrystalGraph& graph, const Crystal& crystal) {
  std::vector<int> origin(graph.num_nodes());
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    origin[v] = crystal.origin_index()[static_cast<std::size_t>(graph.node_cell_atom[v])];
  }
  return origin;
}

void record(AuditReport& report, double discrepancy, double tol, const std::function<std::string()>& witness) {
  ++report.trials;
  report.worst_discrepancy = std::max(report.worst_discrepancy, discrepancy);
  if (!(discrepancy <= tol)) {
    ++report.violations;
    if (!report.witness) report.witness = witness();
  }
}

}  // namespace

GraphSignature graph_signature(const CrystalGraph& graph) {
  const auto incoming = incoming_edges(graph);
  GraphSignature sig;
  sig.reserve(graph.num_nodes());
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) sig.push_back(node_signature_of(graph, v, incoming));
  std::sort(sig.begin(), sig.end(), signature_less);
  return sig;
}

GraphSignature quotient_signature(const CrystalGraph& graph, std::span<const int> node_origin, double* spread) {
  if (node_origin.size() != graph.num_nodes()) throw GraphError("node origin length mismatch");
  const auto incoming = incoming_edges(graph);
  std::map<int, NodeSignature> representative;
  double worst = 0.0;
  for (std::size_t v = 0; v < graph.num_nodes(); ++v) {
    NodeSignature sig = node_signature_of(graph, v, incoming);
    auto [it, inserted] = representative.try_emplace(node_origin[v], sig);
    if (!inserted) worst = std::max(worst, node_discrepancy(it->second, sig));
  }
  if (spread) *spread = worst;
  GraphSignature out;
  out.reserve(representative.size());
  for (auto& [origin, sig] : representative) out.push_back(std::move(sig));
  std::sort(out.begin(), out.end(), signature_less);
  return out;
}

double signature_discrepancy(const GraphSignature& a, const GraphSignature& b, double tol) {
  if (a.size() != b.size()) return kInf;
  std::vector<bool> used(b.size(), false);
  double worst = 0.0;
  for (const NodeSignature& na : a) {
    double best = kInf;
    std::size_t best_idx = b.size();
    for (std::size_t k = 0; k < b.size(); ++k) {
      if (used[k]) continue;
      const double d = node_discrepancy(na, b[k]);
      if (d < best) {
        best = d;
        best_idx = k;
        if (d == 0.0) break;
      }
    }
    if (best_idx == b.size() || !(best <= tol)) return best_idx == b.size() ? kInf : best;
    used[best_idx] = true;
    worst = std::max(worst, best);
  }
  return worst;
}

std::string audit_report_json(const AuditReport& report) {
  json j;
  j["construction_name"] = report.construction_name;
  j["trials"] = report.trials;
  j["violations"] = report.violations;
  j["worst_discrepancy"] =
      std::isfinite(report.worst_discrepancy) ? json(report.worst_discrepancy) : json("structural");
  j["witness"] = report.witness ? json::parse(*report.witness) : json(nullptr);
  return j.dump(2);
}

std::string audit_report_summary(const AuditReport& report) {
  std::ostringstream os;
  os << report.construction_name << ": violations=" << report.violations << " trials=" << report.trials
     << " worst_discrepancy=";
  if (std::isfinite(report.worst_discrepancy)) {
    os << report.worst_discrepancy;
  } else {
    os << "structural";
  }
  os << (report.passed() ? " [invariant]" : " [NOT invariant]");
  return os.str();
}

AuditReport audit_periodic_invariance(const GraphBuilder& builder, std::string name,
                                      std::span<const Crystal> crystals, int trials_per_crystal,
                                      std::uint64_t seed, const PeriodicAuditOptions& options) {
  if (options.alphas.empty()) throw GraphError("periodic audit needs at least one supercell factor");
  AuditReport report;
  report.construction_name = std::move(name);
  Rng rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, options.alphas.size() - 1);
  for (const Crystal& crystal : crystals) {
    const GraphSignature reference = graph_signature(builder(crystal));
    for (int trial = 0; trial < trials_per_crystal; ++trial) {
      const std::array<int, 3> alpha = options.alphas[pick(rng)];
      const Crystal scaled = supercell(crystal, alpha);
      const Vec3 corner = random_corner(rng, scaled.lattice());
      const Crystal moved = shift_boundary(scaled, corner);
      const CrystalGraph graph = builder(moved);

      double discrepancy = 0.0;
      if (moved.size() == crystal.size()) {
        discrepancy = signature_discrepancy(reference, graph_signature(graph), options.tolerance);
      } else {
        const std::vector<int> origin = node_origins(graph, moved);
        double spread = 0.0;
        const GraphSignature quotient = quotient_signature(graph, origin, &spread);
        discrepancy = std::max(spread, signature_discrepancy(reference, quotient, options.tolerance));
      }
      record(report, discrepancy, options.tolerance,
             [&] { return witness_text(crystal, transform_json_shift(corner, alpha), discrepancy); });
    }
  }
  return report;
}

AuditReport audit_e3_invariance(const GraphBuilder& builder, std::string name,
                                std::span<const Crystal> crystals, int trials_per_crystal, std::uint64_t seed,
                                double tolerance) {
  AuditReport report;
  report.construction_name = std::move(name);
  Rng rng(seed);
  for (const Crystal& crystal : crystals) {
    const GraphSignature reference = graph_signature(builder(crystal));
    for (int trial = 0; trial < trials_per_crystal; ++trial) {
      const E3Transform t = random_e3(rng);
      const double discrepancy =
          signature_discrepancy(reference, graph_signature(builder(apply_e3(crystal, t))), tolerance);
      record(report, discrepancy, tolerance, [&] { return witness_text(crystal, transform_json_e3(t), discrepancy); });
    }
  }
  return report;
}

AuditReport audit_determinism(const SeededGraphBuilder& builder, std::string name,
                              std::span<const Crystal> crystals, int runs, std::uint64_t seed, double tolerance) {
  AuditReport report;
  report.construction_name = std::move(name);
  Rng rng(seed);
  for (const Crystal& crystal : crystals) {
    const GraphSignature reference = graph_signature(builder(crystal, 0));
    double worst = 0.0;
    for (int run = 1; run < runs; ++run) {
      worst = std::max(worst, signature_discrepancy(reference, graph_signature(builder(crystal, rng())), tolerance));
    }
    record(report, worst, tolerance, [&] {
      return witness_text(crystal, json{{"kind", "enumeration_order"}, {"runs", runs}}, worst);
    });
  }
  return report;
}

CrystalGraph ocgraph_builder(const Crystal& crystal, double r) {
  if (!(r > 0.0)) throw GraphError("ocgraph cutoff must be positive");
  struct Site {
    int atom;
    LatticeImage image;
    Vec3 position;
  };
  // Cell atoms first, then every other image within r of some cell atom.
  std::vector<Site> sites;
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    sites.push_back({static_cast<int>(i), LatticeImage{}, crystal.position(i)});
  }
  std::map<std::pair<int, LatticeImage>, bool> seen;
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    for (std::size_t j = 0; j < crystal.size(); ++j) {
      for (const ImageDistance& im : image_distances_within(crystal, i, j, r)) {
        if (im.image.is_zero()) continue;
        if (seen.emplace(std::make_pair(static_cast<int>(j), im.image), true).second) {
          sites.push_back({static_cast<int>(j), im.image,
                           crystal.position(j) + frac_to_cart(im.image.as_vector(), crystal.lattice())});
        }
      }
    }
  }
  std::stable_sort(sites.begin() + static_cast<std::ptrdiff_t>(crystal.size()), sites.end(),
                   [](const Site& a, const Site& b) { return std::tie(a.atom, a.image) < std::tie(b.atom, b.image); });

  CrystalGraph g;
  g.meta.method = "ocgraph";
  g.meta.cutoff = r;
  for (const Site& s : sites) {
    g.node_atomic_numbers.push_back(crystal.atomic_numbers()[static_cast<std::size_t>(s.atom)]);
    g.node_cell_atom.push_back(s.atom);
    g.node_image.push_back(s.image);
  }
  g.node_features.resize(static_cast<Eigen::Index>(sites.size()), crystal.atom_features().cols());
  for (std::size_t v = 0; v < sites.size(); ++v) {
    g.node_features.row(static_cast<Eigen::Index>(v)) =
        crystal.atom_features().row(static_cast<Eigen::Index>(sites[v].atom));
  }
  for (std::size_t a = 0; a < sites.size(); ++a) {
    for (std::size_t b = 0; b < sites.size(); ++b) {
      if (a == b) continue;
      const double d = (sites[a].position - sites[b].position).norm();
      g.edges.push_back({static_cast<int>(a), static_cast<int>(b), d, sites[a].image - sites[b].image,
                         EdgeKind::neighbor});
    }
  }
  canonicalize_edge_order(g);
  return g;
}

CrystalGraph knn_distance_only_builder(const Crystal& crystal, int k, std::uint64_t perturbation_seed) {
  if (k < 1) throw GraphError("k must be at least 1");
  CrystalGraph g;
  g.meta.method = "knn";
  g.meta.neighbor_rank = k;
  g.node_atomic_numbers = crystal.atomic_numbers();
  g.node_features = crystal.atom_features();
  g.node_cell_atom.resize(crystal.size());
  std::iota(g.node_cell_atom.begin(), g.node_cell_atom.end(), 0);
  g.node_image.assign(crystal.size(), LatticeImage{});
  g.meta.node_radius.resize(crystal.size());

  Rng rng(perturbation_seed);
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    // Everything up to and including every image tied with the k-th.
    const double r = adaptive_radius(crystal, i, k) + 1e-6;
    std::vector<Neighbor> candidates = neighbors_within(crystal, i, r);
    if (perturbation_seed != 0) std::shuffle(candidates.begin(), candidates.end(), rng);
    // Distance-only ranking: keys are rounded so that ties are left to the
    // enumeration order above.
    std::stable_sort(candidates.begin(), candidates.end(), [](const Neighbor& a, const Neighbor& b) {
      return std::llround(a.distance * 1e8) < std::llround(b.distance * 1e8);
    });
    candidates.resize(std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(k)));
    for (const Neighbor& nb : candidates) {
      g.edges.push_back({nb.j, static_cast<int>(i), nb.distance, nb.image, EdgeKind::neighbor});
      g.meta.node_radius[i] = std::max(g.meta.node_radius[i], nb.distance);
    }
  }
  canonicalize_edge_order(g);
  return g;
}

Crystal boundary_pair_crystal() {
  Mat3 lattice = Mat3::Zero();
  lattice.diagonal() << 1.0, 5.0, 5.0;
  PositionMatrix pos(2, 3);
  pos << 0.0, 0.0, 0.0,
         0.1, 0.0, 0.0;
  return Crystal(lattice, pos, {8, 14});
}

Crystal tie_crystal() {
  Mat3 lattice = Mat3::Zero();
  lattice.diagonal() << 2.0, 1.0, 1.0;
  PositionMatrix pos(2, 3);
  pos << 0.0, 0.0, 0.0,
         1.0, 0.0, 0.0;
  return Crystal(lattice, pos, {11, 17});
}

std::vector<Crystal> adversarial_corpus() {
  std::vector<Crystal> out{boundary_pair_crystal(), tie_crystal()};
  Mat3 lattice = Mat3::Zero();
  lattice.diagonal() << 1.5, 4.0, 4.5;
  PositionMatrix pos(3, 3);
  pos << 0.05, 0.1, 0.1,
         1.40, 0.2, 0.3,
         0.75, 2.0, 2.2;
  out.emplace_back(lattice, pos, std::vector<int>{3, 8, 26});
  return out;
}

LineGraphSize line_graph_size(long long n_nodes, int degree) {
  if (n_nodes < 1 || degree < 1) throw GraphError("line graph size needs n >= 1 and degree >= 1");
  if ((n_nodes * degree) % 2 != 0) throw GraphError("degree * n must be even for an undirected graph");
  LineGraphSize s;
  s.nodes = static_cast<long long>(degree) * n_nodes / 2;
  s.edges = s.nodes * (2LL * (degree - 1)) / 2;
  return s;
}

UndirectedMultigraph regular_multigraph(int n, int degree) {
  if (n < 2) throw GraphError("a loop-free regular multigraph needs at least two nodes");
  if (degree < 2 || degree % 2 != 0) throw GraphError("circulant construction needs an even degree");
  UndirectedMultigraph g;
  g.num_nodes = n;
  // Offsets 1..n-1 repeated; each offset adds 2 to every degree.
  for (int o = 0; o < degree / 2; ++o) {
    const int shift = 1 + o % (n - 1);
    for (int v = 0; v < n; ++v) g.edges.emplace_back(v, (v + shift) % n);
  }
  return g;
}

LineGraphSize explicit_line_graph_size(const UndirectedMultigraph& graph) {
  std::vector<std::vector<int>> incident(static_cast<std::size_t>(graph.num_nodes));
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [u, v] = graph.edges[e];
    if (u == v) throw GraphError("line graph construction does not accept self loops");
    incident[static_cast<std::size_t>(u)].push_back(static_cast<int>(e));
    incident[static_cast<std::size_t>(v)].push_back(static_cast<int>(e));
  }
  std::vector<std::pair<int, int>> line_edges;
  for (const auto& edges_at_node : incident) {
    for (std::size_t a = 0; a < edges_at_node.size(); ++a) {
      for (std::size_t b = a + 1; b < edges_at_node.size(); ++b) line_edges.emplace_back(edges_at_node[a], edges_at_node[b]);
    }
  }
  return {static_cast<long long>(graph.edges.size()), static_cast<long long>(line_edges.size())};
}

}  // namespace matformer
