// Edge-hit counter for -fsanitize-coverage=trace-pc builds.
// Counts are keyed by a hash of the call-site offset from the image base so
// that they are stable under ASLR. Written at exit (or SIGABRT) to the file
// named by WEDGE_COV_OUT as "<slot> <count>" lines.
#include <signal.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <fcntl.h>
#include <unistd.h>

#define WEDGE_MAP_SIZE 65536

extern "C" char __executable_start;

static uint32_t wedge_counts[WEDGE_MAP_SIZE];
static int wedge_dumped = 0;

extern "C" void __sanitizer_cov_trace_pc(void) {
  uintptr_t pc = (uintptr_t)__builtin_return_address(0) - (uintptr_t)&__executable_start;
  uint32_t h = (uint32_t)(pc * 0x9E3779B1u);
  wedge_counts[(h ^ (h >> 16)) & (WEDGE_MAP_SIZE - 1)]++;
}

static void wedge_dump(void) {
  if (wedge_dumped) return;
  wedge_dumped = 1;
  const char* path = getenv("WEDGE_COV_OUT");
  if (!path) return;
  int fd = open(path, O_WRONLY | O_CREAT | O_TRUNC, 0644);
  if (fd < 0) return;
  char line[32];
  for (uint32_t i = 0; i < WEDGE_MAP_SIZE; i++) {
    if (!wedge_counts[i]) continue;
    int n = snprintf(line, sizeof line, "%u %u\n", i, wedge_counts[i]);
    if (write(fd, line, (size_t)n) < 0) break;
  }
  close(fd);
}

static void wedge_on_abort(int sig) {
  wedge_dump();
  signal(sig, SIG_DFL);
  raise(sig);
}

__attribute__((constructor)) static void wedge_init(void) {
  atexit(wedge_dump);
  signal(SIGABRT, wedge_on_abort);
}
