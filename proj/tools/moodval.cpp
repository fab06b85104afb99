#include <iostream>

#include "moodval/cli.hpp"

int main(int argc, char** argv) { return moodval::cli::run(argc, argv, std::cout, std::cerr); }
