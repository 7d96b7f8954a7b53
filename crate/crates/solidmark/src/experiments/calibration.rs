//! Closed-form chance rates for the key-matching test.
//!
//! An unmemorized model's predicted key is an independent uniform draw; the
//! probability that it lands within `delta` of the true key sets the
//! inherent false-positive floor every count must be read against.

/// `P(|U - V| <= delta)` for independent continuous uniforms: `2d - d^2`.
pub fn fp_rate_closed_form(delta: f64) -> f64 {
    2.0 * delta - delta * delta
}

/// The same probability when both keys live on the 256-level grid
/// `{0, 1/255, ..., 1}`: counting pairs `|i - j| <= floor(255 delta)`.
pub fn fp_rate_grid(delta: f64) -> f64 {
    let m = (255.0 * delta).floor().min(255.0) as u64;
    // pairs with |i-j| <= m out of 256^2: 256 + 2 * sum_{d=1..m} (256 - d)
    let within = 256 + 2 * (m * 256 - m * (m + 1) / 2);
    within as f64 / (256.0 * 256.0)
}

/// Chance of at least one hit over `r` independent trials on the grid.
pub fn fp_rate_any_of_grid(delta: f64, r: usize) -> f64 {
    1.0 - (1.0 - fp_rate_grid(delta)).powi(r as i32)
}
