pub fn write(p: *mut i32, v: i32) -> i32 {
    let doubled = v * 2;
    // store through the pointer
    unsafe {
        *p = doubled;
    }
    let a = doubled + 1;
    let b = a + 1;
    let c = b + 1;
    c
}
