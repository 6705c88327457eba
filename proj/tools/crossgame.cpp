#include <iostream>

#include "crossgame/cli.hpp"

int main(int argc, char** argv) { return crossgame::cli_main(argc, argv, std::cout, std::cerr); }
