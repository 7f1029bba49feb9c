#pragma once

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace mssl {
// Readable parameter values in test listings.
inline void PrintTo(LossKind k, std::ostream* os) { *os << to_string(k); }
}  // namespace mssl
