#include <iostream>
#include <string>
#include <vector>

#include "cutgam/cli.hpp"
#include "cutgam/error.hpp"

int main(int argc, char** argv) {
    namespace cli = cutgam::cli;
    std::vector<std::string> args(argv + 1, argv + argc);
    cli::RunConfig config;
    try {
        std::string help;
        config = cli::parse_command_line(args, &help);
        if (config.command == "help") {
            std::cout << help;
            return 0;
        }
    } catch (const cutgam::Error& e) {
        std::cout << nlohmann::json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump()
                  << '\n';
        return 2;
    }
    const cli::RunOutcome outcome = cli::run(config);
    if (outcome.exit_code != 0) {
        std::cout << outcome.report.dump() << '\n';
        return outcome.exit_code;
    }
    if (config.command == "report" || cli::verbosity() >= 1) std::cout << outcome.summary;
    return 0;
}
