#include "calc.h"

void acc_push(struct Acc *acc, int v)
{
    acc->total = calc_add(acc->total, calc_clamp(v, -CALC_LIMIT, CALC_LIMIT));
    acc->count++;
}

int acc_mean(const struct Acc *acc)
{
    if (acc->count == 0)
        return 0;
    return acc->total / acc->count;
}
