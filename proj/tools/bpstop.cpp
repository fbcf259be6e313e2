#include "cli.hpp"

int main(int argc, char** argv) { return bpstop::cli::run(argc, argv); }
