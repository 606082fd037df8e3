#include "chemotax/cli.hpp"

int main(int argc, char** argv) { return chemotax::cli::run(argc, argv); }
