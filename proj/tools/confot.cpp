#include <iostream>

#include "confot_cli.hpp"

int main(int argc, char** argv) { return confot::cli::run_cli(argc, argv, std::cout, std::cerr); }
