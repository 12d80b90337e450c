//! Banded LU with partial pivoting and restarted GMRES for complex systems.

use num_complex::Complex64 as C;

pub(crate) fn norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Square band matrix with `kl` sub- and `ku` super-diagonals, factorised
/// in place. Storage keeps `kl` extra super-diagonals for pivoting fill-in.
#[derive(Clone, Debug)]
pub(crate) struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<C>,
    pivots: Vec<usize>,
    factored: bool,
}

impl BandLu {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandLu {
            n,
            kl,
            ku,
            width,
            data: vec![C::new(0.0, 0.0); n * width],
            pivots: vec![0; n],
            factored: false,
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    pub fn add(&mut self, i: usize, j: usize, v: C) {
        debug_assert!(j + self.kl >= i && j <= i + self.ku);
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Gaussian elimination with row pivoting. Returns `false` on an exactly
    /// zero pivot.
    pub fn factor(&mut self) -> bool {
        let (n, kl) = (self.n, self.kl);
        let reach = kl + self.ku;
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.data[self.idx(k, k)].norm();
            for i in k + 1..=last {
                let v = self.data[self.idx(i, k)].norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            self.pivots[k] = piv;
            if best == 0.0 {
                return false;
            }
            let jmax = (k + reach).min(n - 1);
            if piv != k {
                for j in k..=jmax {
                    let (a, b) = (self.idx(k, j), self.idx(piv, j));
                    self.data.swap(a, b);
                }
            }
            let inv = 1.0 / self.data[self.idx(k, k)];
            for i in k + 1..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] * inv;
                if l == C::new(0.0, 0.0) {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..=jmax {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        self.factored = true;
        true
    }

    /// Ratio of the largest to the smallest pivot magnitude.
    pub fn pivot_ratio(&self) -> f64 {
        let d: Vec<f64> = (0..self.n).map(|k| self.data[self.idx(k, k)].norm()).collect();
        let max = d.iter().cloned().fold(0.0, f64::max);
        let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, b: &mut [C]) {
        debug_assert!(self.factored);
        let (n, kl) = (self.n, self.kl);
        let reach = kl + self.ku;
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.data[self.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut s = b[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.data[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.data[self.idx(k, k)];
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Right-preconditioned restarted GMRES for `A x = b`, starting from `x`.
pub(crate) fn gmres<A, M>(
    apply: A,
    precond: M,
    b: &[C],
    x: &mut [C],
    restart: usize,
    max_iter: usize,
    tol: f64,
) -> GmresOutcome
where
    A: Fn(&[C]) -> Vec<C>,
    M: Fn(&mut [C]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = C::new(0.0, 0.0));
        return GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
        };
    }
    let mut total = 0;
    let mut last_cycle = f64::INFINITY;
    while total < max_iter {
        let ax = apply(x);
        let r: Vec<C> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        // a restart cycle that gains less than a factor 2 has hit the rounding floor
        if rel <= tol || rel > 0.5 * last_cycle {
            return GmresOutcome {
                iterations: total,
                relative_residual: rel,
            };
        }
        last_cycle = rel;
        let mut v: Vec<Vec<C>> = Vec::with_capacity(restart + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![C::new(0.0, 0.0); restart]; restart + 1];
        let mut cs = vec![C::new(0.0, 0.0); restart];
        let mut sn = vec![C::new(0.0, 0.0); restart];
        let mut g = vec![C::new(0.0, 0.0); restart + 1];
        g[0] = C::new(beta, 0.0);
        let mut used = 0;
        for j in 0..restart {
            if total >= max_iter {
                break;
            }
            total += 1;
            let mut z = v[j].clone();
            precond(&mut z);
            let mut w = apply(&z);
            for i in 0..=j {
                let hij = dot(&v[i], &w);
                h[i][j] = hij;
                for (wk, vk) in w.iter_mut().zip(&v[i]) {
                    *wk -= hij * vk;
                }
            }
            let wn = norm(&w);
            h[j + 1][j] = C::new(wn, 0.0);
            for i in 0..j {
                let t = cs[i].conj() * h[i][j] + sn[i].conj() * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let (a, bb) = (h[j][j], h[j + 1][j]);
            let den = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if den == 0.0 {
                used = j;
                break;
            }
            cs[j] = a / den;
            sn[j] = bb / den;
            h[j][j] = C::new(den, 0.0);
            h[j + 1][j] = C::new(0.0, 0.0);
            g[j + 1] = -sn[j] * g[j];
            g[j] = cs[j].conj() * g[j];
            used = j + 1;
            if g[j + 1].norm() / bnorm <= tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|wk| wk / wn).collect());
        }
        // back substitution on the triangular Hessenberg block
        let mut y = vec![C::new(0.0, 0.0); used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![C::new(0.0, 0.0); n];
        for (yi, vi) in y.iter().zip(&v) {
            for (u, vk) in update.iter_mut().zip(vi) {
                *u += yi * vk;
            }
        }
        precond(&mut update);
        for (xi, u) in x.iter_mut().zip(&update) {
            *xi += u;
        }
        if used == 0 {
            break;
        }
    }
    let ax = apply(x);
    let r: Vec<C> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let final_rel = norm(&r) / bnorm;
    GmresOutcome {
        iterations: total,
        relative_residual: final_rel,
    }
}
