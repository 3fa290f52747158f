#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "matformer/crystal.hpp"
#include "matformer/graph.hpp"

namespace matformer {

/// Tolerance (Angstrom) under which two edge distances count as equal.
inline constexpr double kSignatureTol = 1e-9;

struct EdgeSignature {
  int neighbor_z = 0;
  EdgeKind kind = EdgeKind::neighbor;
  double distance = 0.0;
};

/// Incoming edges of one node, sorted by (neighbor_z, kind, distance).
struct NodeSignature {
  int atomic_number = 0;
  std::vector<EdgeSignature> edges;
};

/// Index-free description of a graph: per-node signatures sorted by
/// (atomic number, edge count, edges).
using GraphSignature = std::vector<NodeSignature>;

GraphSignature graph_signature(const CrystalGraph& graph);

/// Collapses nodes that share an originating atom. `node_origin[v]` names the
/// class of node v. Every class must hold identical signatures; the largest
/// distance mismatch inside a class is written to `*spread` (infinity for a
/// structural mismatch).
GraphSignature quotient_signature(const CrystalGraph& graph, std::span<const int> node_origin,
                                  double* spread = nullptr);

/// Largest distance difference over a one-to-one node matching of `a` and `b`.
/// Infinity when no matching with equal species, kinds and edge counts exists
/// within `tol`.
double signature_discrepancy(const GraphSignature& a, const GraphSignature& b, double tol = kSignatureTol);

struct AuditReport {
  std::string construction_name;
  int trials = 0;
  int violations = 0;
  double worst_discrepancy = 0.0;
  /// JSON text holding the crystal and transform of the first violation.
  std::optional<std::string> witness;

  bool passed() const { return violations == 0; }
};

std::string audit_report_json(const AuditReport& report);
std::string audit_report_summary(const AuditReport& report);

struct PeriodicAuditOptions {
  /// Supercell factors sampled uniformly per trial.
  std::vector<std::array<int, 3>> alphas = {{1, 1, 1}};
  double tolerance = kSignatureTol;
};

/// Periodic-invariance fuzzing: compares builder(c) with
/// builder(shift_boundary(supercell(c, alpha), p)) for random corners p.
AuditReport audit_periodic_invariance(const GraphBuilder& builder, std::string name,
                                      std::span<const Crystal> crystals, int trials_per_crystal,
                                      std::uint64_t seed, const PeriodicAuditOptions& options = {});

/// E(3) fuzzing: compares builder(c) with builder(apply_e3(c, t)) for
/// random orthogonal Q (either determinant sign) and translations b.
AuditReport audit_e3_invariance(const GraphBuilder& builder, std::string name,
                                std::span<const Crystal> crystals, int trials_per_crystal, std::uint64_t seed,
                                double tolerance = kSignatureTol);

/// Builder whose output may depend on an enumeration seed.
using SeededGraphBuilder = std::function<CrystalGraph(const Crystal&, std::uint64_t)>;

/// Runs the builder `runs` times per crystal with different enumeration seeds
/// and counts crystals whose signatures disagree.
AuditReport audit_determinism(const SeededGraphBuilder& builder, std::string name,
                              std::span<const Crystal> crystals, int runs, std::uint64_t seed,
                              double tolerance = kSignatureTol);

/// Negative control: every atom image within `r` of a cell atom becomes its
/// own node and all node pairs are joined (both directions stored). Not
/// periodic invariant.
CrystalGraph ocgraph_builder(const Crystal& crystal, double r);

/// Negative control: k nearest images per node, ranked by distance only, with
/// ties resolved by an enumeration order that `perturbation_seed` shuffles
/// (seed 0 keeps the natural order).
CrystalGraph knn_distance_only_builder(const Crystal& crystal, int k, std::uint64_t perturbation_seed);

/// Two atoms close to each other across a cell face; the image set around
/// the cell changes when the boundary is shifted.
Crystal boundary_pair_crystal();

/// Two species whose 7th-18th nearest neighbours of atom 0 tie at sqrt(2),
/// so a 12-nearest cut has no distance-only resolution.
Crystal tie_crystal();

/// Boundary-sensitive and tie-bearing crystals used as negative-control inputs.
std::vector<Crystal> adversarial_corpus();

struct LineGraphSize {
  long long nodes = 0;
  long long edges = 0;
  friend bool operator==(const LineGraphSize&, const LineGraphSize&) = default;
};

/// Closed-form size of the line graph of an undirected degree-regular graph
/// with n nodes: nodes = degree n / 2, edges = nodes (2 (degree - 1)) / 2.
LineGraphSize line_graph_size(long long n_nodes, int degree = 12);

struct UndirectedMultigraph {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
};

/// Loop-free degree-regular multigraph (circulant offsets, parallel edges
/// allowed). Needs n >= 2 and an even degree.
UndirectedMultigraph regular_multigraph(int n, int degree);

/// Materialises the line graph (one node per edge, one edge per pair of edges
/// sharing an endpoint, counted per shared endpoint) and reports its size.
LineGraphSize explicit_line_graph_size(const UndirectedMultigraph& graph);

}  // namespace matformer
