use mini_list::shared::*;
use mini_list::src::list::{g_list_ops_ptr, list_push};
use mini_list::src::stats::{list_len, list_sum};

fn node(value: i32) -> ListNode {
    ListNode { value, next: ::core::ptr::null_mut() }
}

#[test]
fn push_links_nodes() {
    let mut a = node(1);
    let mut b = node(2);
    let head = list_push(::core::ptr::null_mut(), &mut a);
    let head = list_push(head, &mut b);
    assert_eq!(head, &mut b as *mut ListNode);
    assert_eq!(b.next, &mut a as *mut ListNode);
}

#[test]
fn len_and_sum() {
    let mut nodes = [node(3), node(4), node(5)];
    let mut head: *mut ListNode = ::core::ptr::null_mut();
    for n in nodes.iter_mut() {
        head = list_push(head, n);
    }
    assert_eq!(list_len(head), 3);
    assert_eq!(list_sum(head), 12);
    assert_eq!(list_len(::core::ptr::null()), 0);
    assert_eq!(list_sum(::core::ptr::null()), 0);
}

#[test]
fn push_counts_operations() {
    let before = unsafe { *g_list_ops_ptr() };
    let mut a = node(9);
    list_push(::core::ptr::null_mut(), &mut a);
    let after = unsafe { *g_list_ops_ptr() };
    assert!(after >= before + 1);
}
