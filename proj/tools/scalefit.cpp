#include "scalefit/cli.hpp"

int main(int argc, char** argv) { return scalefit::cli::run(argc, argv); }
