#include "lit/cli.hpp"

int main(int argc, char** argv) { return lit::cli::run(argc, argv); }
