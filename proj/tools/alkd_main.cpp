#include <iostream>

#include "alkd/cli.hpp"

int main(int argc, char** argv) { return alkd::run_cli({argv, argv + argc}, std::cout, std::cerr); }
