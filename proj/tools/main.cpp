#include <string>
#include <vector>

#include "racseg/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return racseg::cli::run(args);
}
