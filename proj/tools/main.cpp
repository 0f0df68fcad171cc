#include <iostream>
#include <string>
#include <vector>

#include "ffmsr/cli/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return ffmsr::cli::run_cli(args, std::cout, std::cerr);
}
