#include "kgrec/cli.h"

int main(int argc, char** argv) { return kgrec::run_cli(argc, argv); }
