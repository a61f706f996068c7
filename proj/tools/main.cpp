#include <iostream>

#include "fiadla/cli.hpp"

int main(int argc, char** argv) { return fiadla::run_cli(argc, argv, std::cout, std::cerr); }
