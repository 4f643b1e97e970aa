#include "stagenet/cli.hpp"

int main(int argc, char** argv) { return stagenet::cli::run(argc, argv); }
