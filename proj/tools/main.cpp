#include <iostream>

#include "gaitstream/cli.hpp"

int main(int argc, char** argv)
{
    return gaitstream::run_cli(argc, argv, std::cout, std::cerr);
}
