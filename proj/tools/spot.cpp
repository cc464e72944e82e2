#include <iostream>

#include "spot/cli.hpp"

int main(int argc, char** argv) { return spot::cli::run(argc, argv, std::cout, std::cerr); }
