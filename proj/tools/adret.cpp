#include <iostream>

#include "adret/cli.hpp"

int main(int argc, char** argv) { return adret::cli::run(argc, argv, std::cout, std::cerr); }
