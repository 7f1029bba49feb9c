#include "mssl/cli.hpp"

int main(int argc, char** argv) { return mssl::cli::run(argc, argv); }
