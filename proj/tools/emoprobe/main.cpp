#include <iostream>

#include "emoprobe/cli.hpp"

int main(int argc, char** argv) { return emoprobe::run_cli(argc, argv, std::cout, std::cerr); }
