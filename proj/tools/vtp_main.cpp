#include <iostream>

#include "vtp/cli.hpp"

int main(int argc, char** argv) { return vtp::cli::run(argc, argv, std::cout, std::cerr); }
