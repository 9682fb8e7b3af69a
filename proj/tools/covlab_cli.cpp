#include <iostream>

#include "covlab/commands.hpp"

int main(int argc, char** argv) { return covlab::run_cli(argc, argv, std::cout, std::cerr); }
