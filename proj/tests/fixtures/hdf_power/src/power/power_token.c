#include "hdf_power.h"

int g_powerRefCount = 0;
static PowerListener g_listeners[HDF_POWER_MAX_LISTENERS];
static size_t g_listenerCount;

static int PowerNotify(struct PowerToken *token, PowerState state)
{
    int failures = 0;
    for (size_t i = 0; i < g_listenerCount; i++) {
        if (g_listeners[i](token, state) != 0) {
            failures++;
        }
    }
    return failures;
}

int HdfPowerTokenInit(struct PowerToken *token, uint32_t id, const char *name)
{
    if (token == NULL) {
        return -1;
    }
    token->id = id;
    token->state = POWER_STATE_IDLE;
    token->value.raw = 0;
    token->name = name;
    g_powerRefCount++;
    return 0;
}

int HdfPowerSetState(struct PowerToken *token, PowerState state)
{
    if (token == NULL) {
        return -1;
    }
    if (HDF_POWER_DYNAMIC_CTRL == 0 && state == POWER_STATE_SUSPENDED) {
        return -2;
    }
    token->state = state;
    return PowerNotify(token, state);
}

int HdfPowerRegisterListener(PowerListener listener)
{
    if (listener == NULL || g_listenerCount >= HDF_POWER_MAX_LISTENERS) {
        return -1;
    }
    g_listeners[g_listenerCount++] = listener;
    return 0;
}
