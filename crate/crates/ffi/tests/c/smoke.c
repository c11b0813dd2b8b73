#include <stdio.h>
#include <string.h>

#include "secalloc.h"

static const char *TASKSET =
    "cores = 2\n"
    "[[rt_tasks]]\nid = \"a\"\nwcet_us = 2000\nperiod_us = 10000\ncore = 0\n"
    "[[rt_tasks]]\nid = \"b\"\nwcet_us = 9000\nperiod_us = 10000\ncore = 1\n"
    "[[sec_tasks]]\nid = \"s\"\nwcet_us = 1000\ndesired_period_us = 10000\nmax_period_us = 100000\n";

int main(void) {
    SecallocConfig *config = NULL;
    if (secalloc_config_from_toml(TASKSET, &config) != SECALLOC_STATUS_OK) return 1;
    if (secalloc_config_validate(config) != SECALLOC_STATUS_OK) return 2;

    SecallocAllocation *alloc = NULL;
    if (secalloc_allocate(config, SECALLOC_SCHEME_HYDRA, 0, &alloc) != SECALLOC_STATUS_OK) return 3;
    if (secalloc_allocation_task_count(alloc) != 1) return 4;

    SecallocPlacement p;
    if (secalloc_allocation_task(alloc, 0, &p) != SECALLOC_STATUS_OK) return 5;
    if (strcmp(p.id, "s") != 0 || p.core != 0 || p.period_us != 10000 || p.tightness != 1.0) return 6;

    char *text = secalloc_allocation_to_toml(alloc);
    if (text == NULL || strstr(text, "status = \"schedulable\"") == NULL) return 7;
    secalloc_string_free(text);

    if (secalloc_config_from_toml("cores = ", &config) != SECALLOC_STATUS_INVALID_INPUT) return 8;
    if (secalloc_last_error() == NULL) return 9;

    secalloc_allocation_free(alloc);
    secalloc_config_free(config);
    printf("ok\n");
    return 0;
}
