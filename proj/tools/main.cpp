#include "dynbp/cli.hpp"

int main(int argc, char** argv) { return dynbp::run_cli(argc, argv); }
