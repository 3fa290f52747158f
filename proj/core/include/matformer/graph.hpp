#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "matformer/crystal.hpp"

namespace matformer {

class GraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EdgeKind { neighbor, self_connecting };

std::string_view to_string(EdgeKind kind);

/// Directed edge from node `src` (j) to node `dst` (i). `distance` is
/// |p_j + k1 l1 + k2 l2 + k3 l3 - p_i| for `image` = (k1,k2,k3).
struct Edge {
  int src = 0;
  int dst = 0;
  double distance = 0.0;
  LatticeImage image;
  EdgeKind kind = EdgeKind::neighbor;
};

struct ConstructionMeta {
  std::string method;          // "radius", "tfc", "ocgraph", "knn"
  int neighbor_rank = 0;       // radius method
  int t = 0;                   // t-fully-connected
  double cutoff = 0.0;         // fixed cutoff (ocgraph)
  bool self_edges = false;
  std::vector<double> node_radius;  // per-node construction radius used by self-edge dedup
};

/// Multigraph over the atoms of one cell. Repeated (src, dst) pairs are
/// allowed and are told apart by their lattice image.
struct CrystalGraph {
  std::vector<int> node_atomic_numbers;
  FeatureMatrix node_features;
  /// Cell atom each node stands for, and the image it sits at. Graphs whose
  /// nodes aggregate all images use image (0,0,0) throughout.
  std::vector<int> node_cell_atom;
  std::vector<LatticeImage> node_image;
  std::vector<Edge> edges;
  ConstructionMeta meta;

  std::size_t num_nodes() const { return node_atomic_numbers.size(); }
  std::size_t count_edges(EdgeKind kind) const;
};

using GraphBuilder = std::function<CrystalGraph(const Crystal&)>;

/// Slack added to every inclusive radius test (Angstrom) so that images tied
/// with the cutoff survive last-bit rounding differences.
inline constexpr double kRadiusSlack = 1e-8;
inline constexpr int kDefaultNeighborRank = 12;

/// Interplanar spacing |det L| / |l_b x l_c| for each lattice direction.
Vec3 interplanar_spacings(const Mat3& lattice);

/// K_a = ceil(r / d_a). Any image within r of an atom inside the cell has
/// |k_a| <= K_a + 1.
std::array<int, 3> image_bound(const Mat3& lattice, double r);

struct ImageDistance {
  double distance = 0.0;
  LatticeImage image;
};

/// Images of atom j within `r` of atom i, ascending by (distance, image).
/// The zero self pair (i == j, k == 0) is never reported.
std::vector<ImageDistance> image_distances_within(const Crystal& crystal, std::size_t i, std::size_t j,
                                                  double r);

/// The `count` smallest image distances between atoms i and j, ties broken
/// lexicographically on (k1,k2,k3).
std::vector<ImageDistance> image_distances_smallest(const Crystal& crystal, std::size_t i, std::size_t j,
                                                    int count);

struct Neighbor {
  double distance = 0.0;
  int j = 0;
  LatticeImage image;
};

/// All images of all atoms within `r` of atom i, ascending by (distance, j, image).
std::vector<Neighbor> neighbors_within(const Crystal& crystal, std::size_t i, double r);

/// rank-th smallest image distance (with multiplicity) from atom i to any atom.
double adaptive_radius(const Crystal& crystal, std::size_t i, int rank = kDefaultNeighborRank);

CrystalGraph build_radius_graph(const Crystal& crystal, int neighbor_rank = kDefaultNeighborRank);

CrystalGraph build_t_fully_connected(const Crystal& crystal, int t);

/// Images used for the six self-connecting candidates, in the order
/// |l1|, |l2|, |l3|, |l1+l2|, |l1+l3|, |l2+l3|.
inline constexpr std::array<LatticeImage, 6> kSelfConnectingImages = {
    LatticeImage{1, 0, 0}, LatticeImage{0, 1, 0}, LatticeImage{0, 0, 1},
    LatticeImage{1, 1, 0}, LatticeImage{1, 0, 1}, LatticeImage{0, 1, 1}};

std::array<double, 6> six_lattice_distances(const Mat3& lattice);

/// Adds the six lattice-shape self edges to every node, skipping a candidate
/// whose length is already inside that node's construction radius.
CrystalGraph add_self_connecting_edges(CrystalGraph graph, const Crystal& crystal);

/// Recovers L L^T from the six self-edge lengths using
/// l_a . l_b = (|l_a + l_b|^2 - |l_a|^2 - |l_b|^2) / 2.
/// Throws GraphError if the result is not positive semi-definite.
Mat3 lattice_gram_from_six(const std::array<double, 6>& d);

/// Sorts edges by (dst, src, kind, image) so aggregation order is fixed.
void canonicalize_edge_order(CrystalGraph& graph);

/// Throws GraphError if a node has no incoming edge or an edge is malformed.
void validate_graph(const CrystalGraph& graph);

/// Builds graphs for many crystals, fanning out over `threads` workers.
/// Output order matches input order.
std::vector<CrystalGraph> build_graphs(std::span<const Crystal> crystals, const GraphBuilder& builder,
                                       unsigned threads = 0);

GraphBuilder radius_builder(int neighbor_rank = kDefaultNeighborRank, bool self_edges = true);
GraphBuilder tfc_builder(int t, bool self_edges = false);

}  // namespace matformer
