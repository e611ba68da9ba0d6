#include "minegan/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return minegan::cli::main(argc, argv, std::cout, std::cerr); }
