#ifndef BPNP_TOOLS_CLI_H_
#define BPNP_TOOLS_CLI_H_

#include <ostream>

namespace bpnp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the bpnp tool: pose | sfm | calib | gradcheck.
int Run(int argc, const char* const* argv, std::ostream& out,
        std::ostream& err);

}  // namespace bpnp::cli

#endif  // BPNP_TOOLS_CLI_H_
