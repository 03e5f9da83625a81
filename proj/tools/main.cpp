#include "bmfpca/cli.hpp"

int main(int argc, char** argv) { return bmfpca::cli::run(argc, argv); }
