//! Straight-line reference kernels over `Vec<Vec<f64>>`.

use crate::dd::Dd;

pub type Mat = Vec<Vec<f64>>;

/// Rotates each adjacent pair `(2i, 2i+1)` of every row by `pos * freq[i]`
/// using an explicit 2x2 rotation matrix.
pub fn rotate(x: &Mat, positions: &[f64], freqs: &[f64]) -> Mat {
    x.iter()
        .zip(positions)
        .map(|(row, &p)| {
            let mut out = vec![0.0; row.len()];
            for (i, &f) in freqs.iter().enumerate() {
                let t = p * f;
                let m = [[t.cos(), -t.sin()], [t.sin(), t.cos()]];
                let (a, b) = (row[2 * i], row[2 * i + 1]);
                out[2 * i] = m[0][0] * a + m[0][1] * b;
                out[2 * i + 1] = m[1][0] * a + m[1][1] * b;
            }
            out
        })
        .collect()
}

/// Causal rotary attention with three nested loops and no tricks.
pub fn causal_attention(q: &Mat, k: &Mat, v: &Mat, positions: &[f64], freqs: &[f64]) -> Mat {
    let n = q.len();
    let d = q[0].len();
    let rq = rotate(q, positions, freqs);
    let rk = rotate(k, positions, freqs);
    let mut out = vec![vec![0.0; v[0].len()]; n];
    for m in 0..n {
        let mut s = vec![0.0; m + 1];
        for (j, sj) in s.iter_mut().enumerate() {
            let mut acc = 0.0;
            for c in 0..d {
                acc += rq[m][c] * rk[j][c];
            }
            *sj = acc / (d as f64).sqrt();
        }
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
        let z: f64 = w.iter().sum();
        for (j, wj) in w.iter().enumerate() {
            for c in 0..v[0].len() {
                out[m][c] += wj / z * v[j][c];
            }
        }
    }
    out
}

/// Mean negative log-likelihood computed with double-double log-sum-exp.
/// Rows with `None` targets are skipped.
pub fn cross_entropy(logits: &Mat, targets: &[Option<usize>]) -> f64 {
    let mut total = Dd::ZERO;
    let mut count = 0usize;
    for (row, t) in logits.iter().zip(targets) {
        let Some(t) = *t else { continue };
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z = row
            .iter()
            .fold(Dd::ZERO, |acc, &x| acc + Dd::from_f64(x - mx).exp());
        let lse = z.ln() + Dd::from_f64(mx);
        total = total + (lse - Dd::from_f64(row[t]));
        count += 1;
    }
    (total / Dd::from_f64(count as f64)).to_f64()
}
