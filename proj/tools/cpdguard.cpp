#include <iostream>

#include "cpdguard/cli.hpp"

int main(int argc, char** argv) { return cpdguard::cli::run_cli(argc, argv, std::cout, std::cerr); }
