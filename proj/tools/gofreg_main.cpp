#include "gofreg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gofreg::run_cli(argc, argv, std::cout, std::cerr); }
