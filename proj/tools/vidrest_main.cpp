#include <iostream>
#include <string>
#include <vector>

#include "vidrest/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vidrest::run_cli(args, std::cout, std::cerr);
}
