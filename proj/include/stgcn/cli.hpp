#pragma once

#include <string>
#include <vector>

namespace stgcn {

// Entry point shared by the binary and the tests. args excludes argv[0].
// Returns 0 on success; failures print one machine-parseable line to stderr
// ("error: ...") and return nonzero.
int cli_run(const std::vector<std::string>& args);

}  // namespace stgcn
