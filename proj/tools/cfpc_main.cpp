#include "cfpc/harness.hpp"

int main(int argc, char** argv) { return cfpc::cli_entry(argc, argv); }
