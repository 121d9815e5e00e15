#include "cowal/cli.hpp"

int main(int argc, char** argv) {
    return cowal::cli::run_command(std::vector<std::string>(argv, argv + argc));
}
