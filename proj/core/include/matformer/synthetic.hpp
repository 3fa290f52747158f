#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "matformer/crystal.hpp"

namespace matformer {

using Rng = std::mt19937_64;

/// Lattice rows from cell lengths (Angstrom) and angles (degrees), with l1
/// along x and l2 in the xy plane.
Mat3 lattice_from_parameters(double a, double b, double c, double alpha_deg, double beta_deg,
                             double gamma_deg);

struct RandomCrystalOptions {
  int min_atoms = 1;
  int max_atoms = 6;
  double min_length = 2.0;
  double max_length = 8.0;
  double min_angle_deg = 60.0;
  double max_angle_deg = 120.0;
  /// Reject cells whose volume is below this fraction of a*b*c.
  double min_volume_fraction = 0.3;
  /// Minimum image distance between any two atoms (Angstrom).
  double min_separation = 0.7;
  std::vector<int> species = {3, 6, 8, 11, 12, 14, 16, 26, 29, 30};
};

Crystal random_crystal(Rng& rng, const RandomCrystalOptions& options = {});
std::vector<Crystal> random_corpus(std::size_t count, std::uint64_t seed, const RandomCrystalOptions& options = {});

/// Haar-random orthogonal matrix; with `allow_reflection` the determinant sign
/// is drawn uniformly.
Mat3 random_orthogonal(Rng& rng, bool allow_reflection = true);
E3Transform random_e3(Rng& rng, double translation_scale = 10.0);

/// Uniform point inside the cell parallelepiped (Cartesian).
Vec3 random_corner(Rng& rng, const Mat3& lattice);

/// Mean of |l1|, |l2|, |l3|: invariant to rotations, translations and
/// boundary shifts.
double mean_lattice_length(const Crystal& crystal);

}  // namespace matformer
