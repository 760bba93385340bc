#include <iostream>

#include "pf/cli.hpp"

int main(int argc, char** argv) { return pf::cli_main(argc, argv, std::cout, std::cerr); }
