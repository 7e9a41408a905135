#include "tracedr/cli.hpp"

int main(int argc, char** argv) { return tracedr::run_cli(argc, argv); }
