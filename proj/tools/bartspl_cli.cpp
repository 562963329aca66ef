#include "bartspl/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return bartspl::run_cli(argc, argv, std::cout, std::cerr); }
