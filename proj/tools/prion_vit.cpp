#include "prionvit/harness.hpp"

int main(int argc, char** argv) { return prionvit::harness::cli_dispatch(argc, argv); }
