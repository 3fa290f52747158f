#include "matformer/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "matformer/graph.hpp"

namespace matformer {

Mat3 lattice_from_parameters(double a, double b, double c, double alpha_deg, double beta_deg,
                             double gamma_deg) {
  const double deg = std::numbers::pi / 180.0;
  const double ca = std::cos(alpha_deg * deg);
  const double cb = std::cos(beta_deg * deg);
  const double cg = std::cos(gamma_deg * deg);
  const double sg = std::sin(gamma_deg * deg);
  const double cx = c * cb;
  const double cy = c * (ca - cb * cg) / sg;
  const double cz2 = c * c - cx * cx - cy * cy;
  if (!(cz2 > 0.0)) throw CrystalError("cell angles do not form a valid parallelepiped");
  Mat3 lattice;
  lattice << a, 0.0, 0.0,
             b * cg, b * sg, 0.0,
             cx, cy, std::sqrt(cz2);
  return lattice;
}

Crystal random_crystal(Rng& rng, const RandomCrystalOptions& options) {
  std::uniform_real_distribution<double> length(options.min_length, options.max_length);
  std::uniform_real_distribution<double> angle(options.min_angle_deg, options.max_angle_deg);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> count(options.min_atoms, options.max_atoms);
  std::uniform_int_distribution<std::size_t> species(0, options.species.size() - 1);

  for (;;) {
    const double a = length(rng), b = length(rng), c = length(rng);
    const double al = angle(rng), be = angle(rng), ga = angle(rng);
    Mat3 lattice;
    try {
      lattice = lattice_from_parameters(a, b, c, al, be, ga);
    } catch (const CrystalError&) {
      continue;
    }
    if (std::abs(lattice.determinant()) < options.min_volume_fraction * a * b * c) continue;

    const int n = count(rng);
    std::vector<Vec3> frac;
    std::vector<int> z;
    for (int attempt = 0; attempt < 200 && static_cast<int>(frac.size()) < n; ++attempt) {
      const Vec3 f(unit(rng), unit(rng), unit(rng));
      frac.push_back(f);
      z.push_back(options.species[species(rng)]);
      PositionMatrix pos(static_cast<Eigen::Index>(frac.size()), 3);
      for (std::size_t i = 0; i < frac.size(); ++i) {
        pos.row(static_cast<Eigen::Index>(i)) = frac_to_cart(frac[i], lattice).transpose();
      }
      const Crystal trial(lattice, pos, z);
      const std::size_t last = frac.size() - 1;
      bool ok = true;
      for (std::size_t j = 0; j <= last && ok; ++j) {
        if (!image_distances_within(trial, last, j, options.min_separation).empty()) ok = false;
      }
      if (!ok) {
        frac.pop_back();
        z.pop_back();
      }
    }
    if (frac.empty()) continue;
    PositionMatrix pos(static_cast<Eigen::Index>(frac.size()), 3);
    for (std::size_t i = 0; i < frac.size(); ++i) {
      pos.row(static_cast<Eigen::Index>(i)) = frac_to_cart(frac[i], lattice).transpose();
    }
    return Crystal(lattice, std::move(pos), std::move(z));
  }
}

std::vector<Crystal> random_corpus(std::size_t count, std::uint64_t seed, const RandomCrystalOptions& options) {
  Rng rng(seed);
  std::vector<Crystal> out;
  out.reserve(count);
  for (std::size_t c = 0; c < count; ++c) out.push_back(random_crystal(rng, options));
  return out;
}

Mat3 random_orthogonal(Rng& rng, bool allow_reflection) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = gauss(rng);
  const Eigen::HouseholderQR<Mat3> qr(m);
  Mat3 q = qr.householderQ();
  const Mat3 r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < 3; ++c) {
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  }
  if (q.determinant() < 0.0) q.col(0) *= -1.0;
  if (allow_reflection && std::bernoulli_distribution(0.5)(rng)) q.col(0) *= -1.0;
  return q;
}

E3Transform random_e3(Rng& rng, double translation_scale) {
  std::uniform_real_distribution<double> shift(-translation_scale, translation_scale);
  const Mat3 q = random_orthogonal(rng, true);
  const Vec3 b(shift(rng), shift(rng), shift(rng));
  return E3Transform(q, b);
}

Vec3 random_corner(Rng& rng, const Mat3& lattice) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return frac_to_cart(Vec3(unit(rng), unit(rng), unit(rng)), lattice);
}

double mean_lattice_length(const Crystal& crystal) {
  return (crystal.lattice().row(0).norm() + crystal.lattice().row(1).norm() + crystal.lattice().row(2).norm()) /
         3.0;
}

}  // namespace matformer
