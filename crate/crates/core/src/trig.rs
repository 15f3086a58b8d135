//! Direct evaluation of lattice trigonometric sums at off-lattice points.

use num_complex::Complex64 as C64;

/// `e^{i sign q step z}` for centered `q = −n/2..n/2`.
pub fn axis_exps(n: usize, step: f64, z: f64, sign: f64, out: &mut [C64]) {
    let base = C64::from_polar(1.0, sign * step * z);
    let mut cur = C64::from_polar(1.0, -sign * step * z * (n / 2) as f64);
    for slot in out.iter_mut().take(n) {
        *slot = cur;
        cur *= base;
    }
}

/// Σ_q c[q] Π_a e_a[q_a] for a row-major coefficient block with `dims` axes of extent `n`.
pub fn contract(c: &[C64], e: &[&[C64]], n: usize) -> C64 {
    match e.len() {
        1 => c.iter().zip(e[0]).map(|(a, b)| a * b).sum(),
        2 => {
            let mut acc = C64::new(0.0, 0.0);
            for (q1, row) in c.chunks_exact(n).enumerate() {
                let inner: C64 = row.iter().zip(e[1]).map(|(a, b)| a * b).sum();
                acc += inner * e[0][q1];
            }
            acc
        }
        _ => {
            let stride = c.len() / n;
            let mut acc = C64::new(0.0, 0.0);
            for q1 in 0..n {
                acc += e[0][q1] * contract(&c[q1 * stride..(q1 + 1) * stride], &e[1..], n);
            }
            acc
        }
    }
}

/// Evaluates Σ_q c[q] e^{i sign v_q·z} with `v_q = q step` at the point `z`.
pub struct TrigEval {
    n: usize,
    step: f64,
    sign: f64,
    buf: Vec<Vec<C64>>,
}

impl TrigEval {
    pub fn new(n: usize, dims: usize, step: f64, sign: f64) -> Self {
        TrigEval { n, step, sign, buf: vec![vec![C64::new(0.0, 0.0); n]; dims] }
    }

    pub fn eval(&mut self, c: &[C64], z: &[f64]) -> C64 {
        for (b, &za) in self.buf.iter_mut().zip(z) {
            axis_exps(self.n, self.step, za, self.sign, b);
        }
        let e: Vec<&[C64]> = self.buf.iter().map(|b| b.as_slice()).collect();
        contract(c, &e, self.n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum() {
        let n = 4;
        let c: Vec<C64> = (0..n * n * n).map(|i| C64::new(i as f64 * 0.1, 1.0 - i as f64 * 0.03)).collect();
        let z = [0.3, -1.1, 0.7];
        let mut t = TrigEval::new(n, 3, 0.5, -1.0);
        let got = t.eval(&c, &z);
        let mut want = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                for d in 0..n {
                    let q = [a as f64 - 2.0, b as f64 - 2.0, d as f64 - 2.0];
                    let ph = -0.5 * (q[0] * z[0] + q[1] * z[1] + q[2] * z[2]);
                    want += c[(a * n + b) * n + d] * C64::from_polar(1.0, ph);
                }
            }
        }
        assert!((got - want).norm() < 1e-12);
    }
}
