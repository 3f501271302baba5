#include <math.h>
#include <stdio.h>
#include <string.h>

#include "proxyprobe.h"

#define CHECK(cond)                                                  \
    do {                                                             \
        if (!(cond)) {                                               \
            fprintf(stderr, "check failed at line %d: %s\n", __LINE__, #cond); \
            return 1;                                                \
        }                                                            \
    } while (0)

int main(void) {
    double x[16];
    uint32_t y[8];
    for (int i = 0; i < 8; i++) {
        double t = i % 4;
        x[2 * i] = i < 4 ? t : 5.0 + t;
        x[2 * i + 1] = i < 4 ? 0.5 * t : 4.0 - 0.25 * t;
        y[i] = i < 4 ? 0 : 1;
    }

    PpLpModel *lp = NULL;
    CHECK(pp_lp_fit(x, 8, 2, y, NULL, &lp) == PP_STATUS_OK);
    CHECK(pp_lp_dims(lp) == 2);
    double s[8];
    CHECK(pp_lp_score(lp, x, 8, 2, s) == PP_STATUS_OK);
    double auc = 0.0;
    CHECK(pp_auc(s, 4, s + 4, 4, &auc) == PP_STATUS_OK);
    CHECK(auc == 1.0);
    pp_lp_free(lp);

    PpMdModel *md = NULL;
    CHECK(pp_md_fit(x, 4, 2, -1.0, &md) == PP_STATUS_OK);
    CHECK(pp_md_epsilon(md) > 0.0);
    CHECK(pp_md_score(md, x, 8, 2, s) == PP_STATUS_OK);
    CHECK(pp_auc(s, 4, s + 4, 4, &auc) == PP_STATUS_OK);
    CHECK(auc == 1.0);
    CHECK(pp_md_score(md, x, 4, 4, s) == PP_STATUS_DIMENSION_MISMATCH);
    CHECK(pp_last_error() != NULL);
    pp_md_free(md);

    double a[5] = {1, 2, 3, 4, 5};
    double b[5] = {2, 1, 4, 3, 5};
    PpCorrelation c;
    CHECK(pp_spearman(a, b, 5, 10, 1000, 0, &c) == PP_STATUS_OK);
    CHECK(fabs(c.rho - 0.8) < 1e-12);
    CHECK(c.method == PP_P_VALUE_METHOD_EXACT);

    CHECK(pp_auc(NULL, 1, a, 1, &auc) == PP_STATUS_NULL_POINTER);
    CHECK(strcmp(pp_status_name(PP_STATUS_NULL_POINTER), "null pointer") == 0);
    printf("ok %s\n", pp_version());
    return 0;
}
