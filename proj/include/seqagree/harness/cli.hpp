#pragma once

#include <iosfwd>

namespace seqagree::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitAssertion = 4;

/// Entry point of the `seqagree` tool. Subcommands: gen-data, train, eval,
/// compare, export-alignment.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqagree::harness
