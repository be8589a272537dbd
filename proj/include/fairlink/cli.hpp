#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fairlink::cli {

// Runs one subcommand. `args[0]` is the program name. Errors are written to
// `err` as "E_PARSE: ...", "E_VALIDATE: ..." or "E_RUNTIME: ..."; the return
// value is 0 on success, 1 for parse/validation errors, 2 for runtime failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Keys each subcommand accepts, both in --config files and as --key flags.
const std::vector<std::string>& known_keys(const std::string& command);

}  // namespace fairlink::cli
