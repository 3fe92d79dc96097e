#include "drf/cli.hpp"

int main(int argc, char** argv) { return drf::cli::main(argc, argv); }
