#include "alp/cli.hpp"

int main(int argc, char** argv) { return alp::cli::run_cli(argc, argv); }
