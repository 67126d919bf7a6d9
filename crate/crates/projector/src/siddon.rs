/// Exact intersection lengths of one ray with the pixels of a
/// `side x side` unit grid centered on the origin (Siddon traversal).
///
/// The ray is the line `x cos θ + y sin θ = offset`. Returned pairs are
/// `(pixel index, chord length)` with row-major pixel indices, row 0 at
/// `y = side/2`. Zero-length touches (corners, edges) are dropped.
pub fn ray_weights(side: usize, angle_deg: f64, offset: f64) -> Vec<(usize, f64)> {
    let theta = angle_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let (px, py) = (offset * cos, offset * sin);
    let (dx, dy) = (-sin, cos);
    let h = side as f64 / 2.0;
    const PARALLEL: f64 = 1e-12;

    // parametric interval of the line inside the grid square
    let mut s_lo = f64::NEG_INFINITY;
    let mut s_hi = f64::INFINITY;
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < PARALLEL {
            if p <= -h || p >= h {
                return Vec::new();
            }
        } else {
            let (a, b) = ((-h - p) / d, (h - p) / d);
            s_lo = s_lo.max(a.min(b));
            s_hi = s_hi.min(a.max(b));
        }
    }
    if s_hi - s_lo <= 1e-12 {
        return Vec::new();
    }

    let mut crossings = Vec::with_capacity(2 * side + 2);
    crossings.push(s_lo);
    crossings.push(s_hi);
    for (p, d) in [(px, dx), (py, dy)] {
        if d.abs() < PARALLEL {
            continue;
        }
        for k in 0..=side {
            let s = (k as f64 - h - p) / d;
            if s > s_lo && s < s_hi {
                crossings.push(s);
            }
        }
    }
    crossings.sort_by(|a, b| a.total_cmp(b));

    let mut out: Vec<(usize, f64)> = Vec::with_capacity(2 * side);
    for w in crossings.windows(2) {
        let len = w[1] - w[0];
        if len <= 1e-10 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let (x, y) = (px + mid * dx, py + mid * dy);
        let col = ((x + h).floor() as isize).clamp(0, side as isize - 1) as usize;
        let row = ((h - y).floor() as isize).clamp(0, side as isize - 1) as usize;
        let j = row * side + col;
        match out.last_mut() {
            Some(last) if last.0 == j => last.1 += len,
            _ => out.push((j, len)),
        }
    }
    out.sort_by_key(|&(j, _)| j);
    out
}
