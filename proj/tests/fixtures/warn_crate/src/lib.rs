pub fn planted(a: i32) -> i32 {
    let unused_one = a + 1;
    let unused_two = a + 2;
    a
}
