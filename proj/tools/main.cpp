#include "cli.hpp"

int main(int argc, char** argv) { return deep_energy::cli::run(argc, argv); }
