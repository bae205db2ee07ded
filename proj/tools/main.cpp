#include "lkreg/cli.hpp"

int main(int argc, char** argv) { return lkreg::cli::run(argc, argv); }
