#ifndef CAUSALPOSE_CLI_HPP
#define CAUSALPOSE_CLI_HPP

#include <string>
#include <vector>

namespace causalpose::cli {

// Exit-code contract: 0 success, 2 config/usage error, 3 data-model mismatch,
// 1 internal failure.
int run(const std::vector<std::string>& args);

}  // namespace causalpose::cli

#endif
