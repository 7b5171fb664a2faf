#include <iostream>

#include "seqagree/harness/cli.hpp"

int main(int argc, char** argv) { return seqagree::harness::run_cli(argc, argv, std::cout, std::cerr); }
