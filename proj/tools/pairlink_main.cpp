#include "pairlink/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args;
    args.reserve(static_cast<std::size_t>(argc));
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return pairlink::cli::run(std::move(args));
}
