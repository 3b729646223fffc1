#include "clarifykit/cli.hpp"

int main(int argc, char** argv) { return clarifykit::cli::dispatch(argc, argv); }
