// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "lam/cli.hpp"

int main(int argc, char** argv) { return lam::cli::run(argc, argv, std::cout, std::cerr); }
