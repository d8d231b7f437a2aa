#include "flsim/runner.hpp"

int main(int argc, char** argv) {
    return flsim::run_main(argc, argv);
}
