#ifndef CYC_H
#define CYC_H

#include <stddef.h>

#define CYC_LIMIT 16
#define CYC_GREETING "hi\tthere"

#ifdef CYC_WIDE
#define CYC_WORD_BITS 64
typedef unsigned long cyc_word;
#else
#define CYC_WORD_BITS 32
typedef unsigned int cyc_word;
#endif

enum cyc_level { CYC_LOW = -1, CYC_MID = 0, CYC_HIGH = 7 };

struct cyc_flags {
    unsigned int ready : 1;
    unsigned int mode : 3;
    signed int delta : 5;
    unsigned char tag;
    enum cyc_level level;
};

struct cyc_node {
    int type;
    struct cyc_flags flags;
    struct cyc_node *children[2];
    double weight;
};

struct cyc_state;

typedef int (*cyc_visit_fn)(int depth, void *ctx);

extern int g_depth;
extern struct cyc_flags g_flags;

int is_even(int n);
int is_odd(int n);
int cyc_log(const char *fmt, ...);
int cyc_walk(int depth, cyc_visit_fn visit, void *ctx);
int cyc_walk_all(int depth);
cyc_word cyc_mask(unsigned bits);
struct cyc_state *cyc_state_new(void);
int cyc_match(int match, int self);

#endif
