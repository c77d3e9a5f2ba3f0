use core::ffi::c_int;

extern "C" {
    fn abs(x: c_int) -> c_int;
}

pub type Callback = Option<unsafe extern "C" fn(c_int) -> c_int>;

pub struct Wrapper(*mut u8);
unsafe impl Send for Wrapper {}

/// Calls into C.
pub unsafe fn call(x: c_int) -> c_int {
    abs(x)
}

pub fn safe_call(x: c_int) -> c_int {
    let brace = '{';
    let y = unsafe { call(x) };
    let _ = brace;
    match y {
        0 => unsafe {
            call(1)
        },
        _ => y,
    }
}

pub fn labels<'a>(v: &'a [u8]) -> &'a [u8] {
    'outer: loop {
        break 'outer;
    }
    v
}
