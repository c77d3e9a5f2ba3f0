#ifndef HDF_POWER_H
#define HDF_POWER_H

#include <stddef.h>
#include <stdint.h>

#define HDF_POWER_DYNAMIC_CTRL 0
#define HDF_POWER_MAX_LISTENERS 8
#define HDF_POWER_NAME "hdf_power"
#define HDF_POWER_WAKE_CHAR 'w'
#define HDF_POWER_MASK 0xFFu
#define HDF_POWER_FLAG_WAKE (1U << 2)
#define HDF_POWER_SCALE 1.5
#define HDF_POWER_MIN(a, b) ((a) < (b) ? (a) : (b))
#ifdef LOSCFG_FOO
#define HDF_POWER_DEBUG 1
#endif

typedef enum {
    POWER_STATE_IDLE = 0,
    POWER_STATE_ACTIVE,
    POWER_STATE_SUSPENDED = 4,
} PowerState;

union PowerValue {
    uint32_t raw;
    uint8_t bytes[4];
};

struct PowerToken {
    uint32_t id;
    PowerState state;
    union PowerValue value;
    const char *name;
};

typedef int (*PowerListener)(struct PowerToken *token, PowerState state);

extern int g_powerRefCount;

int HdfPowerTokenInit(struct PowerToken *token, uint32_t id, const char *name);
int HdfPowerSetState(struct PowerToken *token, PowerState state);
int HdfPowerRegisterListener(PowerListener listener);
uint32_t HdfPowerGetRaw(const struct PowerToken *token);
uint32_t HdfPowerPack(uint8_t a, uint8_t b, uint8_t c, uint8_t d);

#endif
