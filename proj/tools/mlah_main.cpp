#include <iostream>

#include "mlah/cli.hpp"

int main(int argc, char** argv) { return mlah::run_cli(argc, argv, std::cout, std::cerr); }
