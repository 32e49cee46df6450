//! Composite Simpson quadrature.

/// Integral of `f` over `[a, b]` with `intervals` subintervals (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, intervals: usize) -> f64 {
    let n = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}

/// Entrywise Simpson integral of a vector-valued integrand written into `out`.
///
/// `f(t, buf)` must fill `buf` (same length as `out`).
pub fn simpson_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    intervals: usize,
    out: &mut [f64],
) {
    let n = intervals.max(2).next_multiple_of(2);
    let h = (b - a) / n as f64;
    let mut buf = alloc::vec![0.0; out.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for i in 0..=n {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        f(a + h * i as f64, &mut buf);
        for (o, v) in out.iter_mut().zip(&buf) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o *= h / 3.0);
}
