#include "mvpb/cli.hpp"

int main(int argc, char** argv) { return mvpb::cli_main(argc, argv); }
