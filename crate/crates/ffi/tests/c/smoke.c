#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "capplan.h"

static char *slurp(const char *path) {
    FILE *f = fopen(path, "rb");
    if (!f) return NULL;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    rewind(f);
    char *buf = malloc(n + 1);
    fread(buf, 1, n, f);
    buf[n] = '\0';
    fclose(f);
    return buf;
}

int main(int argc, char **argv) {
    if (argc < 2) return 2;
    char *doc = slurp(argv[1]);
    if (!doc) return 3;

    CapplanModel *model = NULL;
    if (capplan_model_from_json(doc, &model) != CAPPLAN_STATUS_OK) {
        fprintf(stderr, "load: %s\n", capplan_last_error());
        return 4;
    }
    free(doc);

    CapplanPlanOptions options = capplan_plan_options_default();
    char *result = NULL;
    CapplanStatus status = capplan_plan(model, 4, &options, &result);
    if (status != CAPPLAN_STATUS_OK) {
        fprintf(stderr, "plan: %d %s\n", status, capplan_last_error());
        return 5;
    }
    printf("%s\n", result);
    capplan_string_free(result);

    if (capplan_model_from_json("{", &model) != CAPPLAN_STATUS_MODEL_ERROR || capplan_last_error() == NULL) {
        return 6;
    }
    capplan_model_free(model);
    return 0;
}
