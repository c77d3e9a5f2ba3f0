#include "cyc.h"

int g_depth;

int is_even(int n)
{
    g_depth++;
    if (n == 0) {
        return 1;
    }
    return is_odd(n - 1);
}
