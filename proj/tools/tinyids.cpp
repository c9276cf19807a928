#include "tinyids/cli.hpp"

int main(int argc, char** argv) { return tinyids::cli::dispatch(argc, argv); }
