#include <iostream>

#include "repsub/cli.hpp"

int main(int argc, char** argv) { return repsub::cli::main_with_args(argc, argv, std::cerr); }
