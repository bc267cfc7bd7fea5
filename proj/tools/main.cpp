#include <iostream>

#include "gci/cli.hpp"

int main(int argc, char** argv) { return gci::cli::run(argc, argv, std::cout, std::cerr); }
