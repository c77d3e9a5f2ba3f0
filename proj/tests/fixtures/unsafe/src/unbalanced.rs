pub fn broken() {
    unsafe {
        let x = 1;
}
