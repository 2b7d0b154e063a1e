#include <iostream>

#include "attntrack/cli.hpp"

int main(int argc, char** argv) { return attntrack::run_cli(argc, argv, std::cout, std::cerr); }
