#include <math.h>
#include <stdio.h>
#include <string.h>

#include "mgp.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            char msg[256];                                            \
            mgp_last_error_message(msg, sizeof msg);                  \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, msg);                                      \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    MgpScenario *sc = NULL;
    CHECK(mgp_scenario_bundled("star3-asym", &sc) == MGP_STATUS_OK);
    CHECK(mgp_scenario_set_numerics(sc, 0.01, 2e-4) == MGP_STATUS_OK);

    MgpSimulation *sim = NULL;
    CHECK(mgp_simulation_run(sc, &sim) == MGP_STATUS_OK);
    mgp_scenario_free(sc);

    double residual = 1.0;
    CHECK(mgp_simulation_symmetry_residual(sim, &residual) == MGP_STATUS_OK);
    CHECK(residual < 1e-13);

    size_t n = mgp_simulation_snapshot_count(sim);
    double norm = 0.0;
    CHECK(mgp_simulation_norm(sim, n - 1, &norm) == MGP_STATUS_OK);
    CHECK(fabs(norm - 1.0) < 1e-10);

    double flux[3];
    size_t edges[3];
    size_t written = 0;
    CHECK(mgp_simulation_vertex_flux(sim, 0, 0.025, flux, edges, 3, &written) == MGP_STATUS_OK);
    CHECK(written == 3);
    CHECK(flux[0] < 0.0);

    double p[3];
    CHECK(mgp_simulation_edge_selection(sim, 0, 0.025, p, 2, &written) == MGP_STATUS_BUFFER_TOO_SMALL);
    CHECK(written == 3);

    double times[2] = {0.05, 0.1};
    MgpEnsemble *ens = NULL;
    CHECK(mgp_ensemble_sample(sim, 500, 1, MGP_TURN_RULE_MINIMAL, times, 2, &ens) == MGP_STATUS_OK);
    double tv_edges = 1.0, tv_bins = 1.0;
    CHECK(mgp_ensemble_tv(ens, 0, &tv_edges, &tv_bins) == MGP_STATUS_OK);
    CHECK(tv_edges < 0.1);
    mgp_ensemble_free(ens);
    mgp_simulation_free(sim);

    CHECK(mgp_scenario_from_json("{", &sc) == MGP_STATUS_PARSE);
    char msg[8];
    size_t len = mgp_last_error_message(msg, sizeof msg);
    CHECK(len > 7 && strlen(msg) == 7);

    printf("ok %s\n", mgp_version());
    return 0;
}
