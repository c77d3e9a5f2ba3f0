pub fn broken(a: i32) -> u8 {
    let unused = a;
    a
}
