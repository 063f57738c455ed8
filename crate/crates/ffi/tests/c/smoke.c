#include <math.h>
#include <stdio.h>
#include "posthoc_ood.h"

#define CHECK(expr)                                                        \
    do {                                                                   \
        if (!(expr)) {                                                     \
            const char *msg = ood_last_error_message();                    \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #expr, \
                    msg ? msg : "no error");                               \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const float x[4] = {3.0f, -1.0f, 0.5f, 0.5f};
    const float w[4] = {1.0f, 0.0f, 0.0f, 1.0f};
    const float b[2] = {0.0f, 0.0f};
    OodMatrix *features = NULL, *clamped = NULL, *logits = NULL;
    OodHead *head = NULL;
    float scores[2];
    uint8_t is_id[2];

    CHECK(ood_matrix_new(2, 2, x, &features) == OOD_STATUS_OK);
    CHECK(ood_head_new(2, 2, w, b, &head) == OOD_STATUS_OK);
    CHECK(ood_react_apply(features, OOD_EVA_CLIP_CLAMP, &clamped) == OOD_STATUS_OK);
    CHECK(ood_compute_logits(features, head, &logits) == OOD_STATUS_OK);
    CHECK(ood_msp_score(logits, OOD_DEFAULT_TEMPERATURE, scores, 2) == OOD_STATUS_OK);
    CHECK(fabsf(scores[1] - 0.5f) < 1e-6f);
    CHECK(ood_classify(scores, 2, 0.5f, is_id) == OOD_STATUS_OK);
    CHECK(is_id[0] == 1 && is_id[1] == 0);
    CHECK(ood_msp_score(logits, 1.0f, scores, 1) == OOD_STATUS_BUFFER_TOO_SMALL);
    CHECK(ood_last_error_message() != NULL);

    ood_matrix_free(features);
    ood_matrix_free(clamped);
    ood_matrix_free(logits);
    ood_head_free(head);
    puts("ok");
    return 0;
}
