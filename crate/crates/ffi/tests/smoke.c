#include <stdio.h>
#include <string.h>
#include "cfm.h"

int main(void) {
    const float scores[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 0.5f};
    const uint8_t labels[] = {1, 1, 1, 1, 1, 1, 1, 1, 1, 0};
    CfmThreshold t;
    uint8_t mask[10];
    double rate = -1.0;
    uint64_t k = 0;

    if (cfm_max_false_negatives(0.1, 9, &k) != CFM_STATUS_OK || k != 2) return 1;
    if (cfm_calibrate(scores, labels, 10, 0.1, &t) != CFM_STATUS_OK) return 2;
    if (t.kind != CFM_THRESHOLD_KIND_AT || t.value != 3.0) return 3;
    if (cfm_apply_mask(scores, 10, t, mask) != CFM_STATUS_OK) return 4;
    if (cfm_fnr(labels, mask, 10, &rate) != CFM_STATUS_OK) return 5;
    if (cfm_calibrate(NULL, labels, 10, 0.1, &t) != CFM_STATUS_NULL_POINTER) return 6;
    if (strcmp(cfm_last_error_message(), "scores is NULL") != 0) return 7;
    printf("version=%s fnr=%.6f\n", cfm_version(), rate);
    return 0;
}
