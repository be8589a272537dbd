#include <iostream>
#include <string>
#include <vector>

#include "fairlink/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return fairlink::cli::run(args, std::cout, std::cerr);
}
