//! Test-only closed-form references.

/// Independent solve of the 2-bus balance at bus 2 (slack V₁ = 1∠0):
/// eliminating θ from the two equations leaves a scalar function of |V₂|
/// whose high-voltage root is bracketed and bisected.
pub(crate) fn bisection_v2(r: f64, x: f64, p_load: f64) -> (f64, f64) {
    let d = r * r + x * x;
    let (g, b) = (r / d, -x / d);
    let phi = |v: f64| {
        let a = (-p_load - v * v * g) / v;
        let c = v * b;
        a * a + c * c - (g * g + b * b)
    };
    let (mut lo, mut hi) = (0.7, 1.0);
    assert!(phi(lo) < 0.0 && phi(hi) > 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let v = 0.5 * (lo + hi);
    // recover t = θ₂ − θ₁ from G₂₁ cos t + B₂₁ sin t = a, G₂₁ sin t − B₂₁ cos t = c
    let a = (-p_load - v * v * g) / v;
    let c = v * b;
    let (g21, b21) = (-g, -b);
    let det = g21 * g21 + b21 * b21;
    let cos_t = (g21 * a - b21 * c) / det;
    let sin_t = (b21 * a + g21 * c) / det;
    (v, sin_t.atan2(cos_t))
}
