#include <cstdio>

int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::fprintf(stderr, "refrm3d: command layer not wired up yet\n");
  return 4;
}
