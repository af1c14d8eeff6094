//! f64 matrix products tuned for this crate's hot paths.
//!
//! Two adjustments over plain `a.dot(&b)`:
//!
//! * a transposed left operand is copied to standard layout first — the
//!   underlying GEMM runs ~2x faster on packed rows than on a transposed
//!   view, and the copies here are tiny next to the products;
//! * on first use, glibc is told to keep large blocks on the heap
//!   (`M_MMAP_THRESHOLD`), so the repeated multi-megabyte scratch
//!   allocations in training loops reuse memory instead of cycling fresh
//!   pages through `mmap`/`munmap`.

use std::sync::Once;

use ndarray::{Array2, ArrayView2};

fn init_malloc() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(-1 /* M_TRIM_THRESHOLD */, 1 << 30);
    });
}

/// True when the view is a transposed standard-layout matrix.
fn is_transposed(a: &ArrayView2<f64>) -> bool {
    let (rows, _) = a.dim();
    let s = a.strides();
    rows > 1 && s[0] == 1 && s[1] == rows as isize
}

/// `a . b` with the left operand repacked when it is a transposed view.
pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    init_malloc();
    if is_transposed(&a) {
        let packed = a.as_standard_layout();
        packed.dot(&b)
    } else {
        a.dot(&b)
    }
}
