#include <stdio.h>
#include "coevolve.h"

int main(void) {
    CoevolveParams p = {0};
    p.n = 100;
    p.steps = 5;
    p.dim = 2;
    p.k = 3;
    p.cov_scale = 1.0;
    p.m_t = 1;
    p.n_t = 1;
    CoevolveSimulator *sim = NULL;
    if (coevolve_simulator_new(&p, 7, 0, &sim) != COEVOLVE_STATUS_OK) {
        return 1;
    }
    for (int i = 0; i < 5; i++) {
        if (coevolve_simulator_step(sim) != COEVOLVE_STATUS_OK) {
            return 2;
        }
    }
    if (coevolve_simulator_step(sim) != COEVOLVE_STATUS_FINISHED) {
        return 3;
    }
    double h = -1.0;
    coevolve_simulator_text_diversity(sim, &h);
    coevolve_simulator_free(sim);
    printf("H=%.17g floor=%.17g\n", h, coevolve_text_injection_floor(0.05, 0.1, 1000));
    return (h >= 0.0 && h <= 2.0 / 3.0) ? 0 : 4;
}
