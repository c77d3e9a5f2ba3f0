#include <stddef.h>

struct Record {
    int id;
    long stamp;
    char tag[8];
};

size_t record_id_offset(void) { return offsetof(struct Record, id); }

size_t record_stamp_offset(void) { return offsetof(struct Record, stamp); }

size_t record_tag_offset(void) { return offsetof(struct Record, tag); }
