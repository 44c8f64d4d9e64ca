// Copyright 2026 The zcstyle Authors.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "zcstyle/cli.hpp"

int main(int argc, char** argv) {
  return zcstyle::run_cli(argc, argv, std::cout, std::cerr);
}
