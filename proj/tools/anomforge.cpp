#include "anomforge/cli.hpp"

int main(int argc, char** argv) { return anomforge::cli::run(argc, argv); }
