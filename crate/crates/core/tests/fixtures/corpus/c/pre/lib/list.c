#include <stdlib.h>

struct node {
    int value;
    struct node *next;
};

void list_free(struct node *head)
{
    while (head) {
        free(head);
        head = head->next;
    }
}

int list_len(const struct node *head)
{
    int n = 0;
    while (head) { n++; head = head->next; }
    return n;
}
