#pragma once

#include <optional>
#include <string_view>

#include "matformer/crystal.hpp"

namespace matformer {

inline constexpr int kMaxAtomicNumber = 118;
/// One-hot width: index z in [1, 118] is hot, index 0 is unused.
inline constexpr int kOneHotWidth = kMaxAtomicNumber + 1;

bool valid_atomic_number(int z);
std::string_view element_symbol(int z);
std::optional<int> atomic_number_from_symbol(std::string_view symbol);

/// Row vector of width kOneHotWidth with a single 1 at column z.
FeatureMatrix one_hot_atomic_numbers(const std::vector<int>& z);

}  // namespace matformer
