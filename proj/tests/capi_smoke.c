/* SPDX-License-Identifier: Apache-2.0 */
/* Plain C consumer of the shared library. */
#include <carboneval/carboneval.h>

#include <math.h>
#include <stdio.h>

int main(void) {
  ce_device_db* db = NULL;
  ce_estimate_request req;
  ce_estimate_report rep;
  char* json = NULL;
  int failed = 0;

  if (ce_device_db_builtin(&db) != CE_OK) return 1;
  ce_estimate_request_init(&req);
  req.total_flops = 6.3e24;
  req.device = "NVIDIA H100 80GB";
  req.intensity_g_per_kwh = 424.0;
  req.alpha_mode = CE_ALPHA_EXPLICIT;
  req.log10_alpha = 104.78;
  if (ce_estimate(db, NULL, NULL, &req, NULL, &rep) != CE_OK) {
    fprintf(stderr, "estimate failed: %s\n", ce_last_error());
    failed = 1;
  } else if (fabs(rep.operational_kg / 1000.0 - 1966.17) > 0.005 * 1966.17) {
    fprintf(stderr, "unexpected operational estimate %f\n", rep.operational_kg);
    failed = 1;
  } else if (ce_estimate_report_format(&rep, NULL, CE_FORMAT_JSON, &json) != CE_OK) {
    failed = 1;
  }
  ce_string_free(json);
  ce_device_db_free(db);
  printf("%s\n", failed ? "FAIL" : "ok");
  return failed;
}
