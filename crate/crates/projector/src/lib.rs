//! Parallel-beam Radon operator.
//!
//! Pixels are unit squares of a `side x side` grid centered on the rotation
//! axis; row 0 is the top row. Ray `i = angle_index * detector_count + bin`
//! is the line `x cos θ + y sin θ = t` with `t` the bin center, and its
//! weight for pixel `j` is the exact chord length of that line inside the
//! pixel.

mod cache;
mod geometry;
mod siddon;

pub use cache::{cached_radon_matrix, geometry_key, read_operator, write_operator};
pub use geometry::{build_geometry, ProjectionGeometry};
pub use siddon::ray_weights;

use tomo_core::exec::Exec;
use tomo_core::sparse::CsrMatrix;
pub use tomo_core::SparseOperator;

/// Assembles `R` for a geometry, one ray per row.
pub fn build_radon_matrix(geom: &ProjectionGeometry) -> SparseOperator {
    build_radon_matrix_with(geom, Exec::Parallel)
}

pub fn build_radon_matrix_with(geom: &ProjectionGeometry, exec: Exec) -> SparseOperator {
    let d = geom.detector_count();
    let side = geom.image_side();
    let rays = geom.angles_deg().len() * d;
    let rows = exec.map(rays, |i| {
        let angle = geom.angles_deg()[i / d];
        ray_weights(side, angle, geom.bin_center(i % d))
    });
    let matrix = CsrMatrix::from_rows(side * side, rows);
    SparseOperator::new(matrix, geom.angles_deg().to_vec(), d, side, side)
        .expect("chord weights are positive and sized by the geometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use tomo_core::{Image, Sinogram};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_image_projects_to_zero() {
        let op = build_radon_matrix(&build_geometry(7, 0.0, 16).unwrap());
        let p = op.forward(&Image::zeros(16, 16), Exec::Parallel).unwrap();
        assert!(p.values().iter().all(|&v| v == 0.0));
        let b = op.back(&p, Exec::Parallel).unwrap();
        assert!(b.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indicator_image_extracts_column() {
        let op = build_radon_matrix(&build_geometry(5, 0.0, 8).unwrap());
        let j = 27;
        let mut px = vec![0.0; 64];
        px[j] = 1.0;
        let p = op
            .forward(&Image::new(8, 8, px).unwrap(), Exec::Sequential)
            .unwrap();
        let mut expected = vec![0.0; op.rows()];
        for (r, c, w) in op.triples() {
            if c == j {
                expected[r] = w;
            }
        }
        assert_eq!(p.values(), &expected[..]);
    }

    #[test]
    fn single_ray_backprojects_to_row() {
        let op = build_radon_matrix(&build_geometry(3, 0.0, 6).unwrap());
        let i = op.detector_count() + 4;
        let mut e = vec![0.0; op.rows()];
        e[i] = 1.0;
        let p = Sinogram::new(op.angles().to_vec(), op.detector_count(), e).unwrap();
        let img = op.back(&p, Exec::Parallel).unwrap();
        let mut expected = vec![0.0; 36];
        for (c, w) in op.matrix().row(i) {
            expected[c] = w;
        }
        assert_eq!(img.pixels(), &expected[..]);
    }

    #[test]
    fn adjoint_identity() {
        let op = build_radon_matrix(&build_geometry(9, 0.0, 32).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let f: Vec<f64> = (0..op.cols()).map(|_| rng.random::<f64>()).collect();
            let p: Vec<f64> = (0..op.rows()).map(|_| rng.random::<f64>()).collect();
            let rf = op.matrix().mul(&f, Exec::Parallel);
            let rtp = op.matrix().mul_t(&p, Exec::Sequential);
            let norms = dot(&f, &f).sqrt() * dot(&p, &p).sqrt();
            assert!((dot(&rf, &p) - dot(&f, &rtp)).abs() <= 1e-10 * norms);
        }
    }

    #[test]
    fn weights_positive_and_row_sums_bounded() {
        let side = 24;
        let op = build_radon_matrix(&build_geometry(13, 20.0, side).unwrap());
        let diag = (2.0f64).sqrt() * side as f64;
        for i in 0..op.rows() {
            let s: f64 = op
                .matrix()
                .row(i)
                .map(|(_, w)| {
                    assert!(w > 0.0);
                    w
                })
                .sum();
            assert!(s <= diag + 1e-9);
        }
    }

    #[test]
    fn row_sum_is_chord_of_grid() {
        // the grid square is [-s/2, s/2]^2, so a ray at offset t and angle θ
        // crosses it along a segment whose length follows from clipping
        let side = 10;
        let geom = build_geometry(6, 0.0, side).unwrap();
        let op = build_radon_matrix(&geom);
        let h = side as f64 / 2.0;
        for (a, &angle) in geom.angles_deg().iter().enumerate() {
            let th = angle.to_radians();
            for b in 0..geom.detector_count() {
                let t = geom.bin_center(b);
                let (px, py) = (t * th.cos(), t * th.sin());
                let (dx, dy) = (-th.sin(), th.cos());
                let mut lo = f64::NEG_INFINITY;
                let mut hi = f64::INFINITY;
                for (p, d) in [(px, dx), (py, dy)] {
                    if d.abs() < 1e-12 {
                        if p.abs() > h {
                            lo = 1.0;
                            hi = 0.0;
                        }
                    } else {
                        let (s0, s1) = ((-h - p) / d, (h - p) / d);
                        lo = lo.max(s0.min(s1));
                        hi = hi.min(s0.max(s1));
                    }
                }
                let chord = (hi - lo).max(0.0);
                let row = a * geom.detector_count() + b;
                let s: f64 = op.matrix().row(row).map(|(_, w)| w).sum();
                assert!((s - chord).abs() < 1e-9, "ray {row}: {s} vs {chord}");
            }
        }
    }

    #[test]
    fn deterministic_build() {
        let geom = build_geometry(11, 60.0, 20).unwrap();
        let a = build_radon_matrix_with(&geom, Exec::Parallel);
        let b = build_radon_matrix_with(&geom, Exec::Sequential);
        assert_eq!(a, b);
    }

    #[test]
    fn restricting_angles_matches_direct_build() {
        let full = build_radon_matrix(&build_geometry(180, 0.0, 12).unwrap());
        let idx: Vec<usize> = (0..5).map(|k| k * 36).collect();
        let sub = full.restrict_angles(&idx);
        let direct = build_radon_matrix(&build_geometry(5, 0.0, 12).unwrap());
        assert_eq!(sub.angles(), direct.angles());
        assert_eq!(sub, direct);
    }

    #[test]
    fn dimension_errors() {
        let op = build_radon_matrix(&build_geometry(2, 0.0, 4).unwrap());
        assert!(op.forward(&Image::zeros(5, 5), Exec::Parallel).is_err());
        let p = Sinogram::new(vec![0.0], 3, vec![0.0; 3]).unwrap();
        assert!(op.back(&p, Exec::Parallel).is_err());
    }
}
