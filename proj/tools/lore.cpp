#include "lore/app/cli.hpp"

int main(int argc, char** argv) { return lore::app::run_cli(argc, argv); }
