// Placeholder main; the CLI is implemented after the library settles.
#include "voxalign/voxalign.hpp"

int main() { return 0; }
