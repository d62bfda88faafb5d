#include <iostream>

#include "collapselab/runner.hpp"

int main(int argc, char** argv) { return collapselab::run_cli(argc, argv, std::cout, std::cerr); }
