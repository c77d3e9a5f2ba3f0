#include <stddef.h>
#include "list.h"

int list_len(const struct ListNode *head)
{
    int n = 0;
    while (head != NULL) {
        n++;
        head = head->next;
    }
    return n;
}

int list_sum(const struct ListNode *head)
{
    int total = 0;
    for (; head != NULL; head = head->next) {
        total += head->value;
    }
    return total;
}
