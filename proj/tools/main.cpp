#include <iostream>

#include "fieldev/cli.hpp"

int main(int argc, char** argv) { return fieldev::run_cli(argc, argv, std::cout, std::cerr); }
