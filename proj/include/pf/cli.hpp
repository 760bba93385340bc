#pragma once

#include <iosfwd>

namespace pf {

// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pf
