#include <stdio.h>
#include <string.h>
#include "mixpath.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    MxStatus st_ = (call);                                                 \
    if (st_ != MX_STATUS_OK) {                                             \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)st_, mx_last_error()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

int main(void) {
  MxConfig *cfg = NULL;
  CHECK(mx_config_micro(&cfg));

  char *hash = NULL;
  CHECK(mx_config_hash(cfg, &hash));
  printf("hash %s\n", hash);
  mx_string_free(hash);

  uint32_t mask[4] = {1, 1, 1, 1};
  uint64_t flops = 0, params = 0;
  CHECK(mx_arch_cost(cfg, mask, 4, &flops, &params));
  printf("flops %llu params %llu\n", (unsigned long long)flops, (unsigned long long)params);

  double a[4] = {1, 2, 3, 4}, b[4] = {1, 3, 2, 4}, tau = 0;
  CHECK(mx_kendall_tau(a, b, 4, &tau));
  printf("tau %.6f\n", tau);

  uint32_t bad[4] = {0, 1, 1, 1};
  MxStatus st = mx_arch_cost(cfg, bad, 4, &flops, &params);
  printf("bad mask status %d message %s\n", (int)st, mx_last_error() ? "set" : "missing");

  st = mx_config_micro(NULL);
  printf("null out status %d\n", (int)st);

  mx_config_free(cfg);
  return 0;
}
