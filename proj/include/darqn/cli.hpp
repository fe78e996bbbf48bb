#pragma once

namespace darqn {

// Entry point behind tools/darqn. Exit codes: 0 success, 1 usage/config
// error, 2 runtime error.
int cli_main(int argc, const char* const* argv);

}  // namespace darqn
