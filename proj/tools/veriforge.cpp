#include <iostream>

#include "veriforge/cli/app.hpp"

int main(int argc, char** argv) { return veriforge::cli::run(argc, argv, std::cout, std::cerr); }
