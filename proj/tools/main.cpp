#include "ipl/cli.hpp"

int main(int argc, char** argv) { return ipl::run_cli(argc, argv); }
