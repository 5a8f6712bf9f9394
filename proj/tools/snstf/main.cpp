#include "snstf/cli.hpp"

int main(int argc, char** argv)
{
    return snstf::cli::run_cli(argc, argv);
}
