#include <iostream>

#include "profkg/cli.hpp"

int main(int argc, char** argv) { return profkg::run_cli(argc, argv, std::cout, std::cerr); }
