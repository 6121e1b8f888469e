#include "glrtml/cli.hpp"

int main(int argc, char** argv) { return glrtml::cli::run(argc, argv); }
