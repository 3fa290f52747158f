#include "matformer/crystal.hpp"

#include <cmath>
#include <numeric>

#include "matformer/elements.hpp"

namespace matformer {

Vec3 frac_to_cart(const Vec3& frac, const Mat3& lattice) { return lattice.transpose() * frac; }

Vec3 cart_to_frac(const Vec3& cart, const Mat3& lattice) {
  return lattice.transpose().partialPivLu().solve(cart);
}

Vec3 wrap_fractional(const Vec3& frac) {
  Vec3 out;
  for (int a = 0; a < 3; ++a) {
    double x = frac[a] - std::floor(frac[a]);
    if (x >= 1.0 - kWrapSnap || x < 0.0) x = 0.0;
    out[a] = x;
  }
  return out;
}

Crystal::Crystal(const Mat3& lattice, PositionMatrix positions, std::vector<int> atomic_numbers)
    : Crystal(lattice, std::move(positions), atomic_numbers, one_hot_atomic_numbers(atomic_numbers)) {}

Crystal::Crystal(const Mat3& lattice, PositionMatrix positions, std::vector<int> atomic_numbers,
                 FeatureMatrix atom_features, std::vector<int> origin_index)
    : lattice_(lattice),
      positions_(std::move(positions)),
      atomic_numbers_(std::move(atomic_numbers)),
      features_(std::move(atom_features)),
      origin_(std::move(origin_index)) {
  if (atomic_numbers_.empty()) throw CrystalError("crystal must contain at least one atom");
  if (!lattice_.allFinite()) throw CrystalError("lattice contains non-finite entries");
  if (std::abs(lattice_.determinant()) <= kMinCellVolume) {
    throw CrystalError("lattice is singular (lattice vectors are linearly dependent)");
  }
  const auto n = static_cast<Eigen::Index>(atomic_numbers_.size());
  if (positions_.rows() != n) throw CrystalError("position count does not match atom count");
  if (features_.rows() != n) throw CrystalError("atom feature row count does not match atom count");
  if (!positions_.allFinite()) throw CrystalError("positions contain non-finite entries");
  for (int z : atomic_numbers_) {
    if (!valid_atomic_number(z)) throw CrystalError("atomic number out of range: " + std::to_string(z));
  }
  if (origin_.empty()) {
    origin_.resize(atomic_numbers_.size());
    std::iota(origin_.begin(), origin_.end(), 0);
  } else if (origin_.size() != atomic_numbers_.size()) {
    throw CrystalError("origin index length does not match atom count");
  }
  inverse_ = lattice_.inverse();
}

Vec3 Crystal::fractional(std::size_t i) const { return inverse_.transpose() * position(i); }

E3Transform::E3Transform(const Mat3& q, const Vec3& b) : q_(q), b_(b) {
  const double err = (q.transpose() * q - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= kOrthogonalityTol)) {
    throw CrystalError("E3 transform matrix is not orthogonal (|Q^T Q - I| = " + std::to_string(err) + ")");
  }
  if (!b.allFinite()) throw CrystalError("E3 translation is not finite");
}

Crystal shift_boundary(const Crystal& crystal, const Vec3& corner) {
  const Mat3& lattice = crystal.lattice();
  const Vec3 corner_frac = crystal.inverse_lattice().transpose() * corner;
  PositionMatrix moved(crystal.positions().rows(), 3);
  for (std::size_t i = 0; i < crystal.size(); ++i) {
    const Vec3 rel = wrap_fractional(crystal.fractional(i) - corner_frac);
    moved.row(static_cast<Eigen::Index>(i)) = (corner + frac_to_cart(rel, lattice)).transpose();
  }
  return Crystal(lattice, std::move(moved), crystal.atomic_numbers(), crystal.atom_features(),
                 crystal.origin_index());
}

Crystal wrap_positions(const Crystal& crystal) { return shift_boundary(crystal, Vec3::Zero()); }

Crystal supercell(const Crystal& crystal, const std::array<int, 3>& alpha) {
  for (int a : alpha) {
    if (a < 1) throw CrystalError("supercell factors must be positive integers");
  }
  const std::size_t n = crystal.size();
  const std::size_t copies = static_cast<std::size_t>(alpha[0]) * alpha[1] * alpha[2];
  const std::size_t total = n * copies;

  Mat3 lattice = crystal.lattice();
  for (int a = 0; a < 3; ++a) lattice.row(a) *= alpha[a];

  PositionMatrix positions(static_cast<Eigen::Index>(total), 3);
  FeatureMatrix features(static_cast<Eigen::Index>(total), crystal.atom_features().cols());
  std::vector<int> z;
  std::vector<int> origin;
  z.reserve(total);
  origin.reserve(total);

  Eigen::Index row = 0;
  for (int j1 = 0; j1 < alpha[0]; ++j1) {
    for (int j2 = 0; j2 < alpha[1]; ++j2) {
      for (int j3 = 0; j3 < alpha[2]; ++j3) {
        const Vec3 shift = frac_to_cart(Vec3(j1, j2, j3), crystal.lattice());
        for (std::size_t i = 0; i < n; ++i, ++row) {
          positions.row(row) = (crystal.position(i) + shift).transpose();
          features.row(row) = crystal.atom_features().row(static_cast<Eigen::Index>(i));
          z.push_back(crystal.atomic_numbers()[i]);
          origin.push_back(crystal.origin_index()[i]);
        }
      }
    }
  }
  return Crystal(lattice, std::move(positions), std::move(z), std::move(features), std::move(origin));
}

Crystal apply_e3(const Crystal& crystal, const E3Transform& t) {
  const Mat3& q = t.rotation();
  PositionMatrix positions = crystal.positions() * q.transpose();
  positions.rowwise() += t.translation().transpose();
  const Mat3 lattice = crystal.lattice() * q.transpose();
  return Crystal(lattice, std::move(positions), crystal.atomic_numbers(), crystal.atom_features(),
                 crystal.origin_index());
}

}  // namespace matformer
