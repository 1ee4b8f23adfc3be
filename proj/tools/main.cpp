#include <iostream>
#include <string>
#include <vector>

#include "lq/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return lq::run_cli(args, std::cout, std::cerr);
}
