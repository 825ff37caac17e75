#include <string>
#include <vector>

#include "fedlab/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return fedlab::cli::dispatch(args);
}
