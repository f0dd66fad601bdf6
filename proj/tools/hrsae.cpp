#include <iostream>

#include "hrsae/cli.hpp"

int main(int argc, char** argv) { return hrsae::cli::run(argc, argv, std::cout, std::cerr); }
