#include "aimguard/cli.hpp"

int main(int argc, char** argv) { return aimguard::cli::run(argc, argv); }
