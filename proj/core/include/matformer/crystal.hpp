#pragma once

#include <Eigen/Dense>

#include <array>
#include <compare>
#include <cstddef>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace matformer {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using PositionMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class CrystalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Integer offset (k1, k2, k3) naming one periodic copy of an atom:
/// p + k1*l1 + k2*l2 + k3*l3.
struct LatticeImage {
  int k1 = 0;
  int k2 = 0;
  int k3 = 0;

  friend auto operator<=>(const LatticeImage&, const LatticeImage&) = default;

  LatticeImage operator+(const LatticeImage& o) const { return {k1 + o.k1, k2 + o.k2, k3 + o.k3}; }
  LatticeImage operator-(const LatticeImage& o) const { return {k1 - o.k1, k2 - o.k2, k3 - o.k3}; }
  bool is_zero() const { return k1 == 0 && k2 == 0 && k3 == 0; }
  Vec3 as_vector() const { return {double(k1), double(k2), double(k3)}; }

  friend std::ostream& operator<<(std::ostream& os, const LatticeImage& k) {
    return os << '(' << k.k1 << ',' << k.k2 << ',' << k.k3 << ')';
  }
};

// Lattice rows are l1, l2, l3; cart = frac^T * L.
Vec3 frac_to_cart(const Vec3& frac, const Mat3& lattice);
Vec3 cart_to_frac(const Vec3& cart, const Mat3& lattice);

/// Reduces each component into [0, 1). Components within 1e-9 below 1.0
/// snap to 0.0 so the half-open interval survives rounding.
Vec3 wrap_fractional(const Vec3& frac);

inline constexpr double kWrapSnap = 1e-9;

/// A periodic crystal given by one unit cell.
///
/// Positions are Cartesian (Angstrom) and are stored exactly as supplied;
/// fractional and wrapped views are computed on demand. `origin_index`
/// records, for every atom, the index of the atom it was derived from
/// (identity for freshly constructed crystals, propagated through
/// supercell replication). It exists for test bookkeeping only and must not
/// influence graph construction.
class Crystal {
 public:
  /// Atom features default to a one-hot encoding of the atomic number.
  Crystal(const Mat3& lattice, PositionMatrix positions, std::vector<int> atomic_numbers);
  Crystal(const Mat3& lattice, PositionMatrix positions, std::vector<int> atomic_numbers,
          FeatureMatrix atom_features, std::vector<int> origin_index = {});

  std::size_t size() const { return atomic_numbers_.size(); }
  const Mat3& lattice() const { return lattice_; }
  const Mat3& inverse_lattice() const { return inverse_; }
  const PositionMatrix& positions() const { return positions_; }
  Vec3 position(std::size_t i) const { return positions_.row(static_cast<Eigen::Index>(i)).transpose(); }
  Vec3 fractional(std::size_t i) const;
  Vec3 wrapped_fractional(std::size_t i) const { return wrap_fractional(fractional(i)); }
  const std::vector<int>& atomic_numbers() const { return atomic_numbers_; }
  const FeatureMatrix& atom_features() const { return features_; }
  const std::vector<int>& origin_index() const { return origin_; }
  Vec3 lattice_vector(int a) const { return lattice_.row(a).transpose(); }
  double volume() const { return std::abs(lattice_.determinant()); }

 private:
  Mat3 lattice_;
  Mat3 inverse_;
  PositionMatrix positions_;
  std::vector<int> atomic_numbers_;
  FeatureMatrix features_;
  std::vector<int> origin_;
};

/// Orthogonal map Q plus translation b, acting as p -> Q p + b.
class E3Transform {
 public:
  E3Transform(const Mat3& q, const Vec3& b);
  static E3Transform identity() { return {Mat3::Identity(), Vec3::Zero()}; }

  const Mat3& rotation() const { return q_; }
  const Vec3& translation() const { return b_; }

 private:
  Mat3 q_;
  Vec3 b_;
};

inline constexpr double kOrthogonalityTol = 1e-12;

/// Re-expresses the cell with its parallelepiped anchored at `corner`
/// (Cartesian). Each atom moves to the unique image inside
/// corner + [0,1)^3 * L.
Crystal shift_boundary(const Crystal& crystal, const Vec3& corner);

/// Same lattice, every atom moved to its image with fractional coordinates in [0,1).
Crystal wrap_positions(const Crystal& crystal);

/// Replicates the cell alpha[a] times along l_a. Replica (j1,j2,j3) of atom i
/// sits at p_i + j1 l1 + j2 l2 + j3 l3 and keeps origin_index of atom i.
Crystal supercell(const Crystal& crystal, const std::array<int, 3>& alpha);

Crystal apply_e3(const Crystal& crystal, const E3Transform& t);

/// Unit-cell volume check used by constructors: |det L| must exceed this.
inline constexpr double kMinCellVolume = 1e-8;

}  // namespace matformer
