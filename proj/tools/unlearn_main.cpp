#include <vector>

#include "unlearn/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return unlearn::cli::run(args);
}
