// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_CLI_HPP_
#define LAM_CLI_HPP_

#include <iosfwd>

namespace lam::cli {

// Exit codes: 0 success, 1 runtime error (category on stderr), 2 usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lam::cli

#endif  // LAM_CLI_HPP_
