// eda/cli.hpp

#ifndef EDA_CLI_HPP_
#define EDA_CLI_HPP_

#include <iosfwd>

namespace eda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the eda-diar executable. Subcommands: simulate, featurize,
// train, finetune, infer, score, viz.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace eda::cli

#endif  // EDA_CLI_HPP_
