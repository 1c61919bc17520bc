#include "qgeq/cli_runner.hpp"

int main(int argc, char** argv) { return qgeq::cli_main(argc, argv); }
