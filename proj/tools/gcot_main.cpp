#include <iostream>

#include "gcot/cli/app.hpp"

int main(int argc, char** argv) { return gcot::cli::run(argc, argv, std::cout, std::cerr); }
