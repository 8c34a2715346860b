#include <iostream>

#include "reshuffle/cli.hpp"

int main(int argc, char** argv) { return reshuffle::run(argc, argv, std::cout, std::cerr); }
