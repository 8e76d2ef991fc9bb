#include "setmix/cli.hpp"

int main(int argc, char** argv) { return setmix::cli::run(argc, argv); }
