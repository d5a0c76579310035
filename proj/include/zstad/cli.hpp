#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "zstad/config.hpp"
#include "zstad/trainer.hpp"

namespace zstad {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

std::string version_text();

/// Configuration schema of a subcommand; throws UsageError for unknown names.
std::vector<KeySpec> command_schema(const std::string& command);
std::vector<std::string> command_names();

/// Training settings from a ConfigSet built on the train schema. The variant
/// switches and the seed are read only when `with_variant` is set.
TrainConfig train_config(const ConfigSet& c, bool with_variant);

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace zstad
