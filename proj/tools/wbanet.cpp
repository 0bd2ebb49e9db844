#include <iostream>

#include "wbanet/cli.hpp"

int main(int argc, char** argv) { return wbanet::run_cli(argc, argv, std::cout, std::cerr); }
