#include "sfac/cli.hpp"

int main(int argc, char** argv) { return sfac::cli::run(argc, argv); }
