#pragma once

#include <iosfwd>

namespace verdancy {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntimeError = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `verdancy` command. Subcommands:
///   serve    --listen ADDR --data DIR [--species FILE] [--rules FILE] [--feed PATH]
///            [--durability fsync|flush]
///   decode   HEX [--format text|csv]
///   replay   FILE... [--speed X | --batch] [--species FILE] [--rules FILE] [--emit-alerts]
///   simulate --config FILE [--seed N] [--days D] --out PATH
///   report   FILE... [--from TS] [--to TS] [--format text|csv]
///   export   --data DIR --sensor ID [--from TS] [--to TS] --out FILE
/// VERDANCY_DATA is the fallback for --data.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace verdancy
