//! Finite-difference gradient checks.

use alloc::vec::Vec;

/// Central differences `(f(θ+h) − f(θ−h)) / 2h` for every coordinate.
pub fn central_difference<F>(theta: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let orig = probe[k];
            probe[k] = orig + h;
            let up = f(&probe);
            probe[k] = orig - h;
            let down = f(&probe);
            probe[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order stencil `(−f(θ+2h) + 8f(θ+h) − 8f(θ−h) + f(θ−2h)) / 12h`.
pub fn five_point<F>(theta: &[f64], h: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|k| {
            let orig = probe[k];
            let mut at = |d: f64| {
                probe[k] = orig + d;
                f(&probe)
            };
            let v = -at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h);
            probe[k] = orig;
            v / (12.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum());
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
