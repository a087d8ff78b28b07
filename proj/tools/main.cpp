#include "cli.hpp"

int main(int argc, char** argv) { return spsr::cli::run(argc, argv); }
