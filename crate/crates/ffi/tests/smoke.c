#include <math.h>
#include <stdio.h>

#include "losscorr.h"

int main(void) {
    LcNoiseMatrix *t = NULL;
    if (lc_noise_matrix_symmetric(3, 0.2, &t) != LC_STATUS_OK) {
        fprintf(stderr, "%s\n", lc_last_error_message());
        return 1;
    }
    LcLoss *loss = NULL;
    if (lc_loss_new(LC_LOSS_MODE_BACKWARD, t, 0.0, &loss) != LC_STATUS_OK) {
        fprintf(stderr, "%s\n", lc_last_error_message());
        return 1;
    }
    double logits[3] = {0.1, 0.2, -0.3};
    double value = 0.0, grad[3];
    if (lc_loss_evaluate(loss, 0, logits, 3, &value, grad) != LC_STATUS_OK) {
        return 1;
    }
    /* backward gradient sums to zero because T⁻¹ rows sum to one */
    double s = grad[0] + grad[1] + grad[2];
    if (fabs(s) > 1e-12 || !isfinite(value)) {
        return 1;
    }
    LcNoiseMatrix *bad = NULL;
    double entries[4] = {0.5, 0.6, 0.5, 0.5};
    if (lc_noise_matrix_new(entries, 2, &bad) != LC_STATUS_INVALID_ARGUMENT) {
        return 1;
    }
    lc_loss_free(loss);
    lc_noise_matrix_free(t);
    printf("ok %s\n", lc_version());
    return 0;
}
