use tomo_core::error::{Error, Result};
use tomo_core::exec::Exec;
use tomo_core::image::{Image, Sinogram};
use tomo_core::SparseOperator;

/// SIRT from a zero start, projecting onto `f ≥ 0` after every sweep.
pub fn sirt(op: &SparseOperator, p: &Sinogram, iters: usize) -> Result<Image> {
    Ok(sirt_with_trace(op, p, iters, Exec::default())?.0)
}

/// Like [`sirt`], also returning `‖Rf − p‖` after each sweep.
pub fn sirt_with_trace(
    op: &SparseOperator,
    p: &Sinogram,
    iters: usize,
    exec: Exec,
) -> Result<(Image, Vec<f64>)> {
    if iters == 0 {
        return Err(Error::InvalidArgument(
            "SIRT needs at least one sweep".into(),
        ));
    }
    if p.len() != op.rows() {
        return Err(Error::DimensionMismatch(format!(
            "sinogram has {} values, operator has {} rows",
            p.len(),
            op.rows()
        )));
    }
    let r = op.matrix();
    let inv = |s: f64| if s > 0.0 { 1.0 / s } else { 0.0 };
    let w: Vec<f64> = r.row_abs_sums().into_iter().map(inv).collect();
    let c: Vec<f64> = r.col_abs_sums().into_iter().map(inv).collect();
    let p = p.values();

    let mut f = vec![0.0; op.cols()];
    let mut rf = vec![0.0; op.rows()];
    let mut resid = vec![0.0; op.rows()];
    let mut back = vec![0.0; op.cols()];
    let mut trace = Vec::with_capacity(iters);
    r.mul_into(&f, &mut rf, exec);
    for _ in 0..iters {
        for i in 0..resid.len() {
            resid[i] = w[i] * (p[i] - rf[i]);
        }
        r.mul_t_into(&resid, &mut back, exec);
        for j in 0..f.len() {
            f[j] = (f[j] + c[j] * back[j]).max(0.0);
        }
        r.mul_into(&f, &mut rf, exec);
        trace.push(
            rf.iter()
                .zip(p)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        );
    }
    Ok((Image::new(op.image_width(), op.image_height(), f)?, trace))
}
