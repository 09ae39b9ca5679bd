#include <iostream>

#include "helmsman/cli.hpp"

int main(int argc, char** argv) { return helmsman::run_cli(argc, argv, std::cout, std::cerr); }
