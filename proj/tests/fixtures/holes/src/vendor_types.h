/* The vendor header that should define mystery_t is not part of this tree. */
#define HOLDER_VERSION 2
