#include "epal/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return epal::cli::run(argc, argv, std::cout, std::cerr); }
