#include "leafdec/cli.hpp"

int main(int argc, char** argv) { return leafdec::run_cli(argc, argv); }
