#include <iostream>

#include "kgx/cli.hpp"

int main(int argc, char **argv) { return kgx::cli::run(argc, argv, std::cout, std::cerr); }
