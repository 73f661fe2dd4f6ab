/* Rigidity of a braced square, then a short simulation from a formation file.
 *
 *   cargo build --release -p bearingform-ffi
 *   cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *      target/release/libbearingform_ffi.a -lm -lpthread -ldl -o smoke
 *   ./smoke crates/core/tests/data/square.json
 */
#include <stdio.h>

#include "bearingform.h"

static int fail(const char *what) {
  fprintf(stderr, "%s: %s\n", what, bf_last_error());
  return 1;
}

int main(int argc, char **argv) {
  double p[8] = {0, 0, 0, 1, 1, 1, 1, 0};
  uintptr_t edges[10] = {1, 2, 2, 3, 3, 4, 4, 1, 1, 3};
  BfFramework *fw = NULL;
  if (bf_framework_new(2, 4, p, 5, edges, &fw) != BF_STATUS_OK) return fail("framework");
  BfRigidity r;
  if (bf_framework_rigidity(fw, 1e-10, &r) != BF_STATUS_OK) return fail("rigidity");
  printf("bearingform %s: rank %zu, infinitesimally rigid %d\n", bf_version(), (size_t)r.rank,
         r.infinitesimally_rigid);
  bf_framework_free(fw);

  if (argc < 2) return 0;
  BfFormation *f = NULL;
  if (bf_formation_load(argv[1], &f) != BF_STATUS_OK) return fail("load");
  BfSimConfig cfg = bf_sim_config_default();
  cfg.t_end = 5.0;
  BfTrace *t = NULL;
  if (bf_formation_simulate(f, &cfg, &t) != BF_STATUS_OK) return fail("simulate");
  BfMetrics m;
  if (bf_trace_metrics(t, bf_trace_len(t) - 1, &m) != BF_STATUS_OK) return fail("metrics");
  printf("t = %g: bearing error %.3e, |delta| %.3e\n", m.time, m.bearing_error, m.delta_norm);
  bf_trace_free(t);
  bf_formation_free(f);
  return 0;
}
