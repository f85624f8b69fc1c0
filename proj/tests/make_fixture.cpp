// Writes the two-class hue fixture used by the command-line tests.
#include <cstdlib>
#include <iostream>

#include "support.hpp"

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: vggfire_fixture <dir> [per_class] [size]\n";
        return 1;
    }
    const std::size_t per_class = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 8;
    const std::size_t size = argc > 3 ? std::strtoul(argv[3], nullptr, 10) : 16;
    vggfire::test::write_hue_fixture(argv[1], per_class, size);
    return 0;
}
