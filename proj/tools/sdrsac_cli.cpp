#include "sdrsac/cli.hpp"

int main(int argc, char** argv) { return sdrsac::run_cli(argc, argv); }
