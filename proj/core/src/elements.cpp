#include "matformer/elements.hpp"

#include <array>
#include <string>

namespace matformer {
namespace {

constexpr std::array<std::string_view, kMaxAtomicNumber + 1> kSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

}  // namespace

bool valid_atomic_number(int z) { return z >= 1 && z <= kMaxAtomicNumber; }

std::string_view element_symbol(int z) {
  if (!valid_atomic_number(z)) throw CrystalError("atomic number out of range: " + std::to_string(z));
  return kSymbols[static_cast<std::size_t>(z)];
}

std::optional<int> atomic_number_from_symbol(std::string_view symbol) {
  for (int z = 1; z <= kMaxAtomicNumber; ++z) {
    if (kSymbols[static_cast<std::size_t>(z)] == symbol) return z;
  }
  return std::nullopt;
}

FeatureMatrix one_hot_atomic_numbers(const std::vector<int>& z) {
  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(z.size()), kOneHotWidth);
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!valid_atomic_number(z[i])) {
      throw CrystalError("atomic number out of range: " + std::to_string(z[i]));
    }
    out(static_cast<Eigen::Index>(i), z[i]) = 1.0;
  }
  return out;
}

}  // namespace matformer
