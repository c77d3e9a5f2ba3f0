#include <stdlib.h>
#include "cyc.h"

#define WALK_SCALE 2.5f
#define WALK_MARK '*'

struct cyc_state {
    int visits;
    struct cyc_node root;
};

struct walk_local {
    long long total;
    unsigned short hits[3];
};

struct cyc_flags g_flags;
const char *CYC_NAME = "cyc";
static char g_buf[8] = "ab";
static int g_table[4] = {1, 2, 3};
static float g_scale = 2.5f;
static unsigned g_wrap = -1;
static enum cyc_level g_level = CYC_HIGH;
static int counter;
static struct walk_local g_local;
static cyc_visit_fn g_default_visit = NULL;

static int count_visit(int depth, void *ctx)
{
    int *counter = ctx;
    *counter += depth;
    return 0;
}

int cyc_walk(int depth, cyc_visit_fn visit, void *ctx)
{
    for (int i = 0; i < depth && i < CYC_LIMIT; i++) {
        if (visit(i, ctx) != 0) {
            return -1;
        }
    }
    if (is_even(depth)) {
        cyc_log("even depth %d\n", depth);
    }
    return depth;
}

int cyc_walk_all(int depth)
{
    int total = 0;
    cyc_walk(depth, count_visit, &total);
    counter += total;
    g_flags.mode = 3;
    g_local.total += total;
    return total;
}

cyc_word cyc_mask(unsigned bits)
{
    if (bits >= CYC_WORD_BITS) {
        return (cyc_word)-1;
    }
    return ((cyc_word)1 << bits) - 1;
}

struct cyc_state *cyc_state_new(void)
{
    struct cyc_state *s = calloc(1, sizeof(*s));
    if (s != NULL) {
        s->root.type = 1;
    }
    return s;
}

int cyc_match(int match, int self)
{
    return match == self ? counter : g_table[0];
}
