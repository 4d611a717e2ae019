#include "psdo_cli.hpp"

int main(int argc, char** argv) { return psdo::cli::main(argc, argv); }
