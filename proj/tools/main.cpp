#include "jepa3d/cli.hpp"

int main(int argc, char** argv) { return jepa3d::cli::run(argc, argv); }
