#include "cli.hpp"

int main(int argc, char** argv) { return curlm::cli::run(argc, argv); }
