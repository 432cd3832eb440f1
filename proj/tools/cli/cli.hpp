#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace trialign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

inline constexpr const char* kDictionaryEnv = "TRIALIGN_DICTIONARY";

// Exit 0 on success, 1 on a domain error (message on err), 2 on a usage
// error (offending flag and usage on err).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace trialign::cli
