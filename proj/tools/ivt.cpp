#include "ivt/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ivt::run_cli(argc, argv, std::cout, std::cerr); }
