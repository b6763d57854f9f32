//! Shared oracle implementations for the integration suites. Everything
//! here is deliberately written along different code paths from the
//! library: dense block matrices instead of per-block products, and the
//! variance decomposition assembled term by term.

use nalgebra::DMatrix;

use carhy::moments::SigmaMoments;

/// Kolmogorov-Smirnov distance between a sample and a reference CDF.
pub fn ks_distance(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max((f - i as f64 / n).abs());
        ks = ks.max(((i + 1) as f64 / n - f).abs());
    }
    ks
}

/// Naive construction of Omega and the sensitivity matrices from full
/// dense block-diagonal matrices.
///
/// `blocks[k]` is condition k's unscaled covariance factor (3x3 for
/// coefficient contrasts, 1x1 for transform contrasts).
pub fn dense_sensitivity(
    l: &DMatrix<f64>,
    blocks: &[DMatrix<f64>],
    sigma2: &[f64],
) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let k = blocks.len();
    let b = blocks[0].nrows();
    let dim = b * k;
    assert_eq!(l.ncols(), dim);

    let mut full_sigma = DMatrix::zeros(dim, dim);
    for (ki, blk) in blocks.iter().enumerate() {
        for i in 0..b {
            for j in 0..b {
                full_sigma[(ki * b + i, ki * b + j)] = sigma2[ki] * blk[(i, j)];
            }
        }
    }
    let omega = l * &full_sigma * l.transpose();
    let omega_inv = omega.clone().try_inverse().expect("oracle omega invertible");

    let mut bks = Vec::with_capacity(k);
    for (ki, blk) in blocks.iter().enumerate() {
        let mut one_block = DMatrix::zeros(dim, dim);
        for i in 0..b {
            for j in 0..b {
                one_block[(ki * b + i, ki * b + j)] = blk[(i, j)];
            }
        }
        bks.push(l * one_block * l.transpose() * &omega_inv);
    }
    (omega, bks)
}

/// Variance of the matched quadratic form assembled through its two-term
/// conditional decomposition: var{tr(Omega A)} + 2 E{tr(A Omega A Omega)},
/// each expanded separately.
pub fn two_term_mu2(rho: usize, bks: &[DMatrix<f64>], moments: &[SigmaMoments]) -> f64 {
    let kc = bks.len();
    let tr = |m: &DMatrix<f64>| m.trace();

    // var{tr(Omega A)}: variance of -sum a_k Z_k + sum b_k Z_k^2
    //                   + sum_{s>k} c_ks Z_k Z_s with independent Z_k
    let mut var_trace = 0.0;
    for (b, m) in bks.iter().zip(moments) {
        let a_k = tr(b);
        let b_k = tr(&(b * b));
        var_trace += m.var2 * a_k * a_k;
        var_trace += (m.cm4 - m.var2 * m.var2) * b_k * b_k;
        var_trace -= 2.0 * a_k * b_k * m.cm3;
    }
    for k in 0..kc {
        for s in (k + 1)..kc {
            let c_ks = tr(&(&bks[k] * &bks[s] + &bks[s] * &bks[k]));
            var_trace += moments[k].var2 * moments[s].var2 * c_ks * c_ks;
        }
    }

    // E{tr(A Omega A Omega)}
    let mut e_trace = rho as f64;
    for (b, m) in bks.iter().zip(moments) {
        let b2 = b * b;
        e_trace += 3.0 * m.var2 * tr(&b2);
        e_trace += m.cm4 * tr(&(&b2 * &b2));
        e_trace -= 2.0 * m.cm3 * tr(&(&b2 * b));
    }
    for k in 0..kc {
        for s in (k + 1)..kc {
            let sym = &bks[k] * &bks[s] + &bks[s] * &bks[k];
            e_trace += moments[k].var2
                * moments[s].var2
                * (2.0 * tr(&(&bks[k] * &bks[k] * &bks[s] * &bks[s])) + tr(&(&sym * &sym)));
        }
    }

    var_trace + 2.0 * e_trace
}

/// Definitional quadratic-time Benjamini-Hochberg oracle.
pub fn bh_bruteforce(p: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..p.len()).filter(|&i| !p[i].is_nan()).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let m = idx.len() as f64;
    let mut out = vec![f64::NAN; p.len()];
    for (pos, &orig) in idx.iter().enumerate() {
        let mut best = f64::INFINITY;
        for (j, &other) in idx.iter().enumerate().skip(pos) {
            best = best.min(p[other] * m / (j + 1) as f64);
        }
        out[orig] = best.min(1.0).max(p[orig]);
    }
    out
}

/// Mean and (sample) variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
