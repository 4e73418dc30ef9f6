#include "stabilab/harness.hpp"

int main(int argc, char** argv) { return stabilab::run_cli(argc, argv); }
