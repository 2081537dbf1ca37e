#include "emomsase/cli.hpp"

int main(int argc, char** argv) { return emomsase::cli::main_entry(argc, argv); }
