#include "gskit/cli.hpp"

int main(int argc, char** argv) { return gskit::cli::run(argc, argv); }
