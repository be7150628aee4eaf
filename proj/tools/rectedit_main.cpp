#include "rectedit/cli.hpp"

int main(int argc, char **argv) { return rectedit::dispatch(argc, argv); }
