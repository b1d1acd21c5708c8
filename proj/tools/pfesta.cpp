#include <iostream>

#include "pfesta/cli/app.hpp"

int main(int argc, char** argv) { return pfesta::cli::run_cli(argc, argv, std::cout, std::cerr); }
