#include "precedent/cli.hpp"

int main(int argc, char** argv) { return precedent::cli::run(argc, argv); }
