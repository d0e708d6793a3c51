#include "factlearn/cli.hpp"

int main(int argc, char** argv) { return factlearn::run_cli(argc, argv); }
