#include "commands.hpp"

int main(int argc, char** argv) { return tmcseg::cli::run(argc, argv); }
