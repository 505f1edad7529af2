#include "ampnet/cli.hpp"

int main(int argc, char** argv) { return ampnet::run_command(argc, argv); }
