use rand::Rng;

/// Lower bound of stratum `j` out of `k` on `[0, horizon)`.
#[inline]
pub fn stratum_start(j: usize, k: usize, horizon: f64) -> f64 {
    j as f64 * horizon / k as f64
}

/// One uniform draw in each of the `k` equal strata of `[0, horizon)`,
/// returned in ascending order.
pub fn latin_hypercube_times<R: Rng + ?Sized>(k: usize, horizon: f64, rng: &mut R) -> Vec<f64> {
    (0..k)
        .map(|j| {
            let lo = stratum_start(j, k, horizon);
            let hi = stratum_start(j + 1, k, horizon);
            let t = lo + rng.gen::<f64>() * (hi - lo);
            // rounding must not push the draw into the next stratum
            if t >= hi {
                hi.next_down().max(lo)
            } else {
                t
            }
        })
        .collect()
}
