//! No unsafe code here.

pub fn add(a: i32, b: i32) -> i32 {
    // adds
    a + b
}
