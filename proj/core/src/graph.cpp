#include "matformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>
#include <tuple>

namespace matformer {

std::string_view to_string(EdgeKind kind) {
  return kind == EdgeKind::neighbor ? "neighbor" : "self_connecting";
}

std::size_t CrystalGraph::count_edges(EdgeKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(edges.begin(), edges.end(), [kind](const Edge& e) { return e.kind == kind; }));
}

Vec3 interplanar_spacings(const Mat3& lattice) {
  const double volume = std::abs(lattice.determinant());
  Vec3 d;
  for (int a = 0; a < 3; ++a) {
    const Vec3 lb = lattice.row((a + 1) % 3).transpose();
    const Vec3 lc = lattice.row((a + 2) % 3).transpose();
    d[a] = volume / lb.cross(lc).norm();
  }
  return d;
}

std::array<int, 3> image_bound(const Mat3& lattice, double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw GraphError("image_bound requires a positive finite radius");
  if (std::abs(lattice.determinant()) <= kMinCellVolume) throw GraphError("image_bound: singular lattice");
  const Vec3 d = interplanar_spacings(lattice);
  std::array<int, 3> k{};
  for (int a = 0; a < 3; ++a) k[a] = static_cast<int>(std::ceil(r / d[a]));
  return k;
}

namespace {

// Calls fn(distance, image) for every image of j whose distance to i is <= r.
// The search box is centred on the nearest integer shift of the fractional
// separation, so positions need not be wrapped.
template <typename Fn>
void for_each_image(const Crystal& crystal, std::size_t i, std::size_t j, double r, Fn&& fn) {
  const Mat3& lattice = crystal.lattice();
  const Vec3 base = crystal.position(j) - crystal.position(i);
  const Vec3 frac = crystal.inverse_lattice().transpose() * base;
  const std::array<int, 3> bound = image_bound(lattice, r);
  const int s1 = static_cast<int>(std::lround(frac[0]));
  const int s2 = static_cast<int>(std::lround(frac[1]));
  const int s3 = static_cast<int>(std::lround(frac[2]));
  const Vec3 l1 = lattice.row(0).transpose();
  const Vec3 l2 = lattice.row(1).transpose();
  const Vec3 l3 = lattice.row(2).transpose();
  const double r2_loose = r * r * (1.0 + 1e-12);
  const bool same = i == j;

  for (int m1 = -bound[0] - 1; m1 <= bound[0] + 1; ++m1) {
    const int k1 = m1 - s1;
    const Vec3 v1 = base + k1 * l1;
    for (int m2 = -bound[1] - 1; m2 <= bound[1] + 1; ++m2) {
      const int k2 = m2 - s2;
      const Vec3 v2 = v1 + k2 * l2;
      for (int m3 = -bound[2] - 1; m3 <= bound[2] + 1; ++m3) {
        const int k3 = m3 - s3;
        if (same && k1 == 0 && k2 == 0 && k3 == 0) continue;
        const Vec3 v = v2 + k3 * l3;
        const double d2 = v.squaredNorm();
        if (d2 > r2_loose) continue;
        // Decide on the distance itself so that d == r is kept even when r*r rounds down.
        const double d = std::sqrt(d2);
        if (d <= r) fn(d, LatticeImage{k1, k2, k3});
      }
    }
  }
}

bool image_less(const ImageDistance& a, const ImageDistance& b) {
  return std::tie(a.distance, a.image) < std::tie(b.distance, b.image);
}

// Radius of a sphere expected to hold `count` lattice points of a cell of the
// given volume, used as the first guess of growing searches.
double initial_search_radius(const Crystal& crystal, double count_per_cell) {
  const double vol = crystal.volume();
  const double r = std::cbrt(3.0 * count_per_cell * vol / (4.0 * std::numbers::pi));
  return std::max(r, 1e-3);
}

}  // namespace

std::vector<ImageDistance> image_distances_within(const Crystal& crystal, std::size_t i, std::size_t j,
                                                  double r) {
  if (i >= crystal.size() || j >= crystal.size()) throw GraphError("atom index out of range");
  std::vector<ImageDistance> out;
  for_each_image(crystal, i, j, r, [&](double d, LatticeImage k) { out.push_back({d, k}); });
  std::sort(out.begin(), out.end(), image_less);
  return out;
}

std::vector<ImageDistance> image_distances_smallest(const Crystal& crystal, std::size_t i, std::size_t j,
                                                    int count) {
  if (count < 1) throw GraphError("image count must be at least 1");
  if (i >= crystal.size() || j >= crystal.size()) throw GraphError("atom index out of range");
  double r = initial_search_radius(crystal, count + 1.0);
  for (;;) {
    std::vector<ImageDistance> found = image_distances_within(crystal, i, j, r);
    if (static_cast<int>(found.size()) >= count) {
      found.resize(static_cast<std::size_t>(count));
      return found;
    }
    r *= 1.5;
  }
}

std::vector<Neighbor> neighbors_within(const Crystal& crystal, std::size_t i, double r) {
  if (i >= crystal.size()) throw GraphError("atom index out of range");
  std::vector<Neighbor> out;
  for (std::size_t j = 0; j < crystal.size(); ++j) {
    for_each_image(crystal, i, j, r,
                   [&](double d, LatticeImage k) { out.push_back({d, static_cast<int>(j), k}); });
  }
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) {
    return std::tie(a.distance, a.j, a.image) < std::tie(b.distance, b.j, b.image);
  });
  return out;
}

namespace {

// Neighbours of i inside its adaptive radius; also returns that radius.
std::pair<double, std::vector<Neighbor>> adaptive_neighborhood(const Crystal& crystal, std::size_t i,
                                                               int rank) {
  if (rank < 1) throw GraphError("neighbor rank must be at least 1");
  const double per_cell = static_cast<double>(rank) / static_cast<double>(crystal.size());
  double r = initial_search_radius(crystal, per_cell * 1.5 + 1.0);
  for (;;) {
    std::vector<Neighbor> found = neighbors_within(crystal, i, r);
    if (static_cast<int>(found.size()) >= rank) {
      const double radius = found[static_cast<std::size_t>(rank - 1)].distance;
      const double cut = radius + kRadiusSlack;
      if (cut > r) found = neighbors_within(crystal, i, cut);
      std::erase_if(found, [cut](const Neighbor& nb) { return nb.distance > cut; });
      return {radius, std::move(found)};
    }
    r *= 1.5;
  }
}

CrystalGraph empty_graph(const Crystal& crystal) {
  CrystalGraph g;
  g.node_atomic_numbers = crystal.atomic_numbers();
  g.node_features = crystal.atom_features();
  g.node_cell_atom.resize(crystal.size());
  for (std::size_t i = 0; i < crystal.size(); ++i) g.node_cell_atom[i] = static_cast<int>(i);
  g.node_image.assign(crystal.size(), LatticeImage{});
  return g;
}

}  // namespace

double adaptive_radius(const Crystal& crystal, std::size_t i, int rank) {
  return adaptive_neighborhood(crystal, i, rank).first;
}

CrystalGraph build_radius_graph(const Crystal& crystal, int neighbor_rank) {
  CrystalGraph g = empty_graph(crystal);
  g.meta.method = "radius";
  g.meta.neighbor_rank = neighbor_rank;
  g.meta.node_radius.resize(crystal.size());
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    auto [radius, nbrs] = adaptive_neighborhood(crystal, i, neighbor_rank);
    g.meta.node_radius[i] = radius;
    for (const Neighbor& nb : nbrs) {
      g.edges.push_back({nb.j, static_cast<int>(i), nb.distance, nb.image, EdgeKind::neighbor});
    }
  }
  canonicalize_edge_order(g);
  return g;
}

CrystalGraph build_t_fully_connected(const Crystal& crystal, int t) {
  if (t < 1) throw GraphError("t must be at least 1");
  CrystalGraph g = empty_graph(crystal);
  g.meta.method = "tfc";
  g.meta.t = t;
  g.meta.node_radius.assign(crystal.size(), 0.0);
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    for (std::size_t j = 0; j < crystal.size(); ++j) {
      for (const ImageDistance& im : image_distances_smallest(crystal, i, j, t)) {
        g.edges.push_back({static_cast<int>(j), static_cast<int>(i), im.distance, im.image, EdgeKind::neighbor});
        g.meta.node_radius[i] = std::max(g.meta.node_radius[i], im.distance);
      }
    }
  }
  canonicalize_edge_order(g);
  return g;
}

std::array<double, 6> six_lattice_distances(const Mat3& lattice) {
  std::array<double, 6> d{};
  for (std::size_t c = 0; c < kSelfConnectingImages.size(); ++c) {
    d[c] = frac_to_cart(kSelfConnectingImages[c].as_vector(), lattice).norm();
  }
  return d;
}

CrystalGraph add_self_connecting_edges(CrystalGraph graph, const Crystal& crystal) {
  if (graph.num_nodes() != crystal.size()) {
    throw GraphError("self-connecting edges need the graph built from the same crystal");
  }
  if (graph.meta.node_radius.size() != graph.num_nodes()) {
    throw GraphError("graph carries no per-node construction radius");
  }
  const std::array<double, 6> lengths = six_lattice_distances(crystal.lattice());
  for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
    const double cut = graph.meta.node_radius[i] + kRadiusSlack;
    for (std::size_t c = 0; c < lengths.size(); ++c) {
      if (lengths[c] <= cut) continue;
      const int node = static_cast<int>(i);
      graph.edges.push_back({node, node, lengths[c], kSelfConnectingImages[c], EdgeKind::self_connecting});
    }
  }
  graph.meta.self_edges = true;
  canonicalize_edge_order(graph);
  return graph;
}

Mat3 lattice_gram_from_six(const std::array<double, 6>& d) {
  for (double x : d) {
    if (!(x > 0.0) || !std::isfinite(x)) throw GraphError("lattice distances must be positive and finite");
  }
  Mat3 g;
  g(0, 0) = d[0] * d[0];
  g(1, 1) = d[1] * d[1];
  g(2, 2) = d[2] * d[2];
  g(0, 1) = g(1, 0) = 0.5 * (d[3] * d[3] - g(0, 0) - g(1, 1));
  g(0, 2) = g(2, 0) = 0.5 * (d[4] * d[4] - g(0, 0) - g(2, 2));
  g(1, 2) = g(2, 1) = 0.5 * (d[5] * d[5] - g(1, 1) - g(2, 2));

  const Eigen::SelfAdjointEigenSolver<Mat3> eig(g, Eigen::EigenvaluesOnly);
  const double scale = g.diagonal().maxCoeff();
  if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
    throw GraphError("inconsistent lattice distances: recovered Gram matrix is not positive semi-definite");
  }
  return g;
}

void canonicalize_edge_order(CrystalGraph& graph) {
  std::stable_sort(graph.edges.begin(), graph.edges.end(), [](const Edge& a, const Edge& b) {
    return std::tie(a.dst, a.src, a.kind, a.image, a.distance) <
           std::tie(b.dst, b.src, b.kind, b.image, b.distance);
  });
}

void validate_graph(const CrystalGraph& graph) {
  const std::size_t n = graph.num_nodes();
  if (n == 0) throw GraphError("graph has no nodes");
  std::vector<int> indegree(n, 0);
  for (const Edge& e : graph.edges) {
    if (e.src < 0 || e.dst < 0 || static_cast<std::size_t>(e.src) >= n || static_cast<std::size_t>(e.dst) >= n) {
      throw GraphError("edge endpoint out of range");
    }
    if (!(e.distance > 0.0) || !std::isfinite(e.distance)) throw GraphError("edge distance must be positive");
    ++indegree[static_cast<std::size_t>(e.dst)];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (indegree[i] == 0) throw GraphError("node " + std::to_string(i) + " has no incident edge");
  }
}

std::vector<CrystalGraph> build_graphs(std::span<const Crystal> crystals, const GraphBuilder& builder,
                                       unsigned threads) {
  std::vector<CrystalGraph> out(crystals.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(crystals.size(), 1)));
  if (threads <= 1) {
    for (std::size_t c = 0; c < crystals.size(); ++c) out[c] = builder(crystals[c]);
    return out;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t c = w; c < crystals.size(); c += threads) out[c] = builder(crystals[c]);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

GraphBuilder radius_builder(int neighbor_rank, bool self_edges) {
  return [neighbor_rank, self_edges](const Crystal& c) {
    CrystalGraph g = build_radius_graph(c, neighbor_rank);
    return self_edges ? add_self_connecting_edges(std::move(g), c) : g;
  };
}

GraphBuilder tfc_builder(int t, bool self_edges) {
  return [t, self_edges](const Crystal& c) {
    CrystalGraph g = build_t_fully_connected(c, t);
    return self_edges ? add_self_connecting_edges(std::move(g), c) : g;
  };
}

}  // namespace matformer
