#include <iostream>
#include <string>
#include <vector>

#include "qforage/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return qforage::cli::run_cli(args, std::cout, std::cerr);
}
