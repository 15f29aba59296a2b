#include <iostream>

#include "vfd/cli/commands.hpp"

int main(int argc, char** argv) { return vfd::cli::run(argc, argv, std::cout, std::cerr); }
