// SPDX-License-Identifier: Apache-2.0
#include "asd/cli.hpp"

int main(int argc, char** argv) { return asd::cli::run(argc, argv); }
