#ifndef MINI_LIST_H
#define MINI_LIST_H

struct ListNode {
    int value;
    struct ListNode *next;
};

extern int g_list_ops;

struct ListNode *list_push(struct ListNode *head, struct ListNode *node);
int list_len(const struct ListNode *head);
int list_sum(const struct ListNode *head);

#endif
