#include <iostream>

#include "deriva/cli.hpp"

int main(int argc, char** argv) { return deriva::cli::run_cli(argc, argv, std::cout, std::cerr); }
