#pragma once

#include <iosfwd>

namespace otfs::cli {

/// Entry point behind the otfs binary. Returns the process exit code:
/// 0 success, 1 runtime failure (structured error record on `out`),
/// 2 usage or configuration error (usage text on `err`).
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace otfs::cli
