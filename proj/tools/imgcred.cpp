#include "imgcred/cli.hpp"

int main(int argc, char** argv) { return imgcred::cli::run(argc, argv); }
