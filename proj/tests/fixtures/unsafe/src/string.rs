pub fn describe() -> &'static str {
    // unsafe { not code }
    /* unsafe {
       still a comment } */
    let s = "unsafe { inside a string }";
    let _m = "first line
unsafe { second line
third line";
    let _t = r#"unsafe"#;
    s
}
