#include "lungcadex/cli.hpp"

int main(int argc, char** argv) { return lungcadex::cli::run(argc, argv); }
