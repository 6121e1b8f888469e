#pragma once

namespace glrtml::cli {

// Entry point behind the binary; exit codes: 0 ok, 2 config error, 3 I/O
// error, 4 numerical failure.
int run(int argc, const char* const* argv);

}  // namespace glrtml::cli
