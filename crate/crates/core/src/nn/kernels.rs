//! Raw numeric kernels behind the tape ops. Layouts are row-major and
//! activations are `B x C x N`.

/// Convolution geometry.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub len: usize,
    pub k: usize,
    pub dilation: usize,
}

impl ConvDims {
    fn rows(&self) -> usize {
        self.c_in * self.k
    }

    /// Offset of tap `j` relative to the output position.
    fn tap_offset(&self, j: usize) -> isize {
        (j as isize - (self.k as isize - 1) / 2) * self.dilation as isize
    }
}

/// `C = A * B` (or `C += A * B` when `accumulate`), arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    (rsc, csc): (usize, usize),
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(m == 0 || k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    debug_assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    debug_assert!((m - 1) * rsc + (n - 1) * csc < c.len());
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the index bounds of all three operands are checked above
    // against the slice lengths, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

/// Unrolls one batch element into a `(C_in * k) x N` column matrix.
fn im2col(x_b: &[f64], d: &ConvDims, cols: &mut [f64]) {
    let n = d.len;
    for i in 0..d.c_in {
        let row_in = &x_b[i * n..(i + 1) * n];
        for j in 0..d.k {
            let off = d.tap_offset(j);
            let dst = &mut cols[(i * d.k + j) * n..(i * d.k + j + 1) * n];
            for (t, out) in dst.iter_mut().enumerate() {
                let src = t as isize + off;
                *out = if src >= 0 && (src as usize) < n {
                    row_in[src as usize]
                } else {
                    0.0
                };
            }
        }
    }
}

/// Scatter-adds a column-matrix gradient back onto the input layout.
fn col2im(dcols: &[f64], d: &ConvDims, dx_b: &mut [f64]) {
    let n = d.len;
    for i in 0..d.c_in {
        for j in 0..d.k {
            let off = d.tap_offset(j);
            let src = &dcols[(i * d.k + j) * n..(i * d.k + j + 1) * n];
            let lo = (-off).max(0) as usize;
            let hi = ((n as isize - off).min(n as isize)).max(0) as usize;
            for t in lo..hi {
                dx_b[i * n + (t as isize + off) as usize] += src[t];
            }
        }
    }
}

pub(crate) fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], d: &ConvDims) -> Vec<f64> {
    let n = d.len;
    let rows = d.rows();
    let mut out = vec![0.0; d.batch * d.c_out * n];
    let mut cols = vec![0.0; rows * n];
    for b in 0..d.batch {
        im2col(&x[b * d.c_in * n..(b + 1) * d.c_in * n], d, &mut cols);
        let y = &mut out[b * d.c_out * n..(b + 1) * d.c_out * n];
        for (o, row) in y.chunks_mut(n).enumerate() {
            row.fill(bias[o]);
        }
        gemm(d.c_out, rows, n, w, (rows, 1), &cols, (n, 1), y, (n, 1), true);
    }
    out
}

/// Returns `(dx, dw, dbias)`; `dx` only when requested.
pub(crate) fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    d: &ConvDims,
    want_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let n = d.len;
    let rows = d.rows();
    let mut dw = vec![0.0; d.c_out * rows];
    let mut db = vec![0.0; d.c_out];
    let mut dx = want_dx.then(|| vec![0.0; d.batch * d.c_in * n]);
    let mut cols = vec![0.0; rows * n];
    let mut dcols = vec![0.0; rows * n];
    for b in 0..d.batch {
        let dy_b = &dy[b * d.c_out * n..(b + 1) * d.c_out * n];
        for (o, row) in dy_b.chunks(n).enumerate() {
            db[o] += row.iter().sum::<f64>();
        }
        im2col(&x[b * d.c_in * n..(b + 1) * d.c_in * n], d, &mut cols);
        // dW += dY_b * cols^T
        gemm(d.c_out, n, rows, dy_b, (n, 1), &cols, (1, n), &mut dw, (rows, 1), true);
        if let Some(dx) = dx.as_mut() {
            // dcols = W^T * dY_b
            gemm(rows, d.c_out, n, w, (1, rows), dy_b, (n, 1), &mut dcols, (n, 1), false);
            col2im(&dcols, d, &mut dx[b * d.c_in * n..(b + 1) * d.c_in * n]);
        }
    }
    (dx, dw, db)
}

/// `y = x * W^T + b` for `x: B x I`, `W: O x I`.
pub(crate) fn linear_forward(x: &[f64], w: &[f64], bias: &[f64], batch: usize, i: usize, o: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * o];
    for row in y.chunks_mut(o) {
        row.copy_from_slice(bias);
    }
    gemm(batch, i, o, x, (i, 1), w, (1, i), &mut y, (o, 1), true);
    y
}

pub(crate) fn linear_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    batch: usize,
    i: usize,
    o: usize,
    want_dx: bool,
) -> (Option<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let mut dw = vec![0.0; o * i];
    gemm(o, batch, i, dy, (1, o), x, (i, 1), &mut dw, (i, 1), false);
    let mut db = vec![0.0; o];
    for row in dy.chunks(o) {
        for (acc, g) in db.iter_mut().zip(row) {
            *acc += g;
        }
    }
    let dx = want_dx.then(|| {
        let mut dx = vec![0.0; batch * i];
        gemm(batch, o, i, dy, (o, 1), w, (i, 1), &mut dx, (i, 1), false);
        dx
    });
    (dx, dw, db)
}

/// Per-channel batch statistics over `(B, N)`: biased mean/variance.
pub(crate) fn channel_moments(x: &[f64], batch: usize, c: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let count = (batch * n) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..batch {
            s += x[(b * c + ch) * n..(b * c + ch + 1) * n].iter().sum::<f64>();
        }
        let mu = s / count;
        let mut ss = 0.0;
        for b in 0..batch {
            ss += x[(b * c + ch) * n..(b * c + ch + 1) * n]
                .iter()
                .map(|v| (v - mu) * (v - mu))
                .sum::<f64>();
        }
        mean[ch] = mu;
        var[ch] = ss / count;
    }
    (mean, var)
}
