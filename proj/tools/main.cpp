#include <iostream>

#include "verdancy/cli.h"

int main(int argc, char** argv) { return verdancy::run_cli(argc, argv, std::cout, std::cerr); }
