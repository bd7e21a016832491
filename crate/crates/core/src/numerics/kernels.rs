//! Slice-level kernels for the `y = Wᵀx` products used by every synaptic
//! layer. `w` is stored `in × out`, row-major.

/// `out += Wᵀx`; zero inputs are skipped.
pub(crate) fn add_wtx(w: &[f64], n_out: usize, x: &[f64], out: &mut [f64]) {
    debug_assert_eq!(w.len(), x.len() * n_out);
    debug_assert_eq!(out.len(), n_out);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * n_out..(i + 1) * n_out];
        for (o, &wij) in out.iter_mut().zip(row) {
            *o += xi * wij;
        }
    }
}

/// Reverse of [`add_wtx`]: `dw += x dyᵀ`, `dx += W dy`.
pub(crate) fn back_wtx(
    w: &[f64],
    n_out: usize,
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    dx: Option<&mut [f64]>,
) {
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let drow = &mut dw[i * n_out..(i + 1) * n_out];
        for (d, &g) in drow.iter_mut().zip(dy) {
            *d += xi * g;
        }
    }
    if let Some(dx) = dx {
        for (i, d) in dx.iter_mut().enumerate() {
            let row = &w[i * n_out..(i + 1) * n_out];
            *d += row.iter().zip(dy).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}
