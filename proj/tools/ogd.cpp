#include "ogd/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return ogd::cli::run(argc, argv, std::cout, std::cerr); }
