#include "cwcl/cli.hpp"

int main(int argc, char** argv) { return cwcl::cli::run(argc, argv); }
