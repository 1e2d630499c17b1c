//! Brute-force textbook references for the dense kernels, run on small
//! random double-precision instances. Shared by the oracle tests and the
//! acceptance run.

use mpnum::linalg::{
    backsolve, chol, forwardsolve, gemm, matmul, rel_frobenius_error, solve, svd, trsm, GemmParams,
    Side,
};
use mpnum::stats::Rng;
use mpnum::{MPArray, Placement, Precision};

pub const INSTANCES: usize = 200;
pub const TOL: f64 = 1e-12;

/// Dense row-indexed matrix used by the references.
#[derive(Clone, Debug)]
struct Dense {
    r: usize,
    c: usize,
    v: Vec<Vec<f64>>,
}

impl Dense {
    fn zeros(r: usize, c: usize) -> Self {
        Dense {
            r,
            c,
            v: vec![vec![0.0; c]; r],
        }
    }

    fn random(rng: &mut Rng, r: usize, c: usize) -> Self {
        let mut m = Dense::zeros(r, c);
        for i in 0..r {
            for j in 0..c {
                m.v[i][j] = 2.0 * rng.uniform() - 1.0;
            }
        }
        m
    }

    fn t(&self) -> Self {
        let mut m = Dense::zeros(self.c, self.r);
        for i in 0..self.r {
            for j in 0..self.c {
                m.v[j][i] = self.v[i][j];
            }
        }
        m
    }

    fn mul(&self, o: &Dense) -> Dense {
        let mut m = Dense::zeros(self.r, o.c);
        for i in 0..self.r {
            for j in 0..o.c {
                for k in 0..self.c {
                    m.v[i][j] += self.v[i][k] * o.v[k][j];
                }
            }
        }
        m
    }

    fn scale(&self, s: f64) -> Dense {
        let mut m = self.clone();
        m.v.iter_mut().flatten().for_each(|x| *x *= s);
        m
    }

    fn add(&self, o: &Dense) -> Dense {
        let mut m = self.clone();
        for i in 0..self.r {
            for j in 0..self.c {
                m.v[i][j] += o.v[i][j];
            }
        }
        m
    }

    fn to_array(&self) -> MPArray {
        let mut vals = Vec::with_capacity(self.r * self.c);
        for j in 0..self.c {
            vals.extend((0..self.r).map(|i| self.v[i][j]));
        }
        MPArray::from_doubles(&vals, self.r, self.c, Precision::Double, Placement::Cpu).unwrap()
    }
}

fn err(got: &MPArray, want: &Dense) -> f64 {
    rel_frobenius_error(got, &want.to_array()).unwrap()
}

fn size(rng: &mut Rng) -> usize {
    1 + (rng.uniform() * 8.0) as usize
}

fn spd(rng: &mut Rng, n: usize) -> Dense {
    let b = Dense::random(rng, n, n);
    let mut a = b.t().mul(&b);
    for i in 0..n {
        a.v[i][i] += n as f64;
    }
    a
}

/// Triangular with a diagonal bounded away from zero.
fn triangular(rng: &mut Rng, n: usize, lower: bool) -> Dense {
    let mut t = Dense::random(rng, n, n);
    for i in 0..n {
        for j in 0..n {
            if (lower && j > i) || (!lower && j < i) {
                t.v[i][j] = 0.0;
            } else if i == j {
                t.v[i][i] = 1.0 + rng.uniform();
            } else {
                t.v[i][j] *= 0.5;
            }
        }
    }
    t
}

fn textbook_cholesky_lower(a: &Dense) -> Dense {
    let n = a.r;
    let mut l = Dense::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l.v[i][k] * l.v[j][k]).sum();
            if i == j {
                l.v[i][i] = (a.v[i][i] - s).sqrt();
            } else {
                l.v[i][j] = (a.v[i][j] - s) / l.v[j][j];
            }
        }
    }
    l
}

fn substitution(t: &Dense, b: &Dense, lower: bool) -> Dense {
    let n = t.r;
    let mut x = Dense::zeros(n, b.c);
    for col in 0..b.c {
        let order: Vec<usize> = if lower {
            (0..n).collect()
        } else {
            (0..n).rev().collect()
        };
        for &i in &order {
            let mut s = b.v[i][col];
            for k in 0..n {
                if k != i {
                    s -= t.v[i][k] * x.v[k][col];
                }
            }
            x.v[i][col] = s / t.v[i][i];
        }
    }
    x
}

fn gauss_jordan(a: &Dense, b: &Dense) -> Dense {
    let n = a.r;
    let mut m = a.clone();
    let mut x = b.clone();
    for col in 0..n {
        let p = (col..n)
            .max_by(|&i, &j| m.v[i][col].abs().total_cmp(&m.v[j][col].abs()))
            .unwrap();
        m.v.swap(col, p);
        x.v.swap(col, p);
        let d = m.v[col][col];
        m.v[col].iter_mut().for_each(|v| *v /= d);
        x.v[col].iter_mut().for_each(|v| *v /= d);
        for i in 0..n {
            if i != col {
                let f = m.v[i][col];
                for j in 0..n {
                    m.v[i][j] -= f * m.v[col][j];
                }
                for j in 0..x.c {
                    x.v[i][j] -= f * x.v[col][j];
                }
            }
        }
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)] // mirrors the textbook index form
fn jacobi_eigenvalues(a: &Dense) -> Vec<f64> {
    let n = a.r;
    let mut m = a.v.clone();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_matmul(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for _ in 0..instances {
        let (m, k, n) = (size(&mut rng), size(&mut rng), size(&mut rng));
        let a = Dense::random(&mut rng, m, k);
        let b = Dense::random(&mut rng, k, n);
        worst = worst.max(err(
            &matmul(&a.to_array(), &b.to_array()).unwrap(),
            &a.mul(&b),
        ));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_gemm(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for i in 0..instances {
        let (m, k, n) = (size(&mut rng), size(&mut rng), size(&mut rng));
        let (ta, tb) = (i % 2 == 1, (i / 2) % 2 == 1);
        let a = Dense::random(&mut rng, if ta { k } else { m }, if ta { m } else { k });
        let b = Dense::random(&mut rng, if tb { n } else { k }, if tb { k } else { n });
        let c0 = Dense::random(&mut rng, m, n);
        let (alpha, beta) = (2.0 * rng.uniform() - 1.0, 2.0 * rng.uniform() - 1.0);
        let opa = if ta { a.t() } else { a.clone() };
        let opb = if tb { b.t() } else { b.clone() };
        let want = opa.mul(&opb).scale(alpha).add(&c0.scale(beta));
        let mut c = c0.to_array();
        let params = GemmParams {
            trans_a: ta,
            trans_b: tb,
            alpha,
            beta,
        };
        gemm(&a.to_array(), &b.to_array(), &mut c, params).unwrap();
        worst = worst.max(err(&c, &want));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_chol(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for _ in 0..instances {
        let n = size(&mut rng);
        let a = spd(&mut rng, n);
        worst = worst.max(err(
            &chol(&a.to_array()).unwrap(),
            &textbook_cholesky_lower(&a).t(),
        ));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_triangular(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for _ in 0..instances {
        let (n, k) = (size(&mut rng), size(&mut rng));
        let b = Dense::random(&mut rng, n, k);
        let l = triangular(&mut rng, n, true);
        worst = worst.max(err(
            &forwardsolve(&l.to_array(), &b.to_array()).unwrap(),
            &substitution(&l, &b, true),
        ));
        let u = triangular(&mut rng, n, false);
        worst = worst.max(err(
            &backsolve(&u.to_array(), &b.to_array()).unwrap(),
            &substitution(&u, &b, false),
        ));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_trsm(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for i in 0..instances {
        let (n, k) = (size(&mut rng), size(&mut rng));
        let upper = i % 2 == 0;
        let trans = (i / 2) % 2 == 1;
        let side = if (i / 4) % 2 == 0 {
            Side::Left
        } else {
            Side::Right
        };
        let alpha = 0.5 + rng.uniform();
        let a = triangular(&mut rng, n, !upper);
        let op = if trans { a.t() } else { a.clone() };
        let op_lower = upper == trans;
        let (b, want) = match side {
            Side::Left => {
                let b = Dense::random(&mut rng, n, k);
                let x = substitution(&op, &b.scale(alpha), op_lower);
                (b, x)
            }
            // X op(A) = alpha B  <=>  op(A)ᵀ Xᵀ = alpha Bᵀ.
            Side::Right => {
                let b = Dense::random(&mut rng, k, n);
                let x = substitution(&op.t(), &b.t().scale(alpha), !op_lower).t();
                (b, x)
            }
        };
        let mut got = b.to_array();
        trsm(&a.to_array(), &mut got, side, upper, trans, alpha).unwrap();
        worst = worst.max(err(&got, &want));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_solve(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for i in 0..instances {
        let (n, k) = (size(&mut rng), size(&mut rng));
        // Alternate general and symmetric systems so both paths are covered.
        let a = if i % 2 == 0 {
            let mut a = Dense::random(&mut rng, n, n);
            for d in 0..n {
                a.v[d][d] += n as f64;
            }
            a
        } else {
            spd(&mut rng, n)
        };
        let b = Dense::random(&mut rng, n, k);
        worst = worst.max(err(
            &solve(&a.to_array(), Some(&b.to_array())).unwrap(),
            &gauss_jordan(&a, &b),
        ));
        let mut eye = Dense::zeros(n, n);
        (0..n).for_each(|d| eye.v[d][d] = 1.0);
        worst = worst.max(err(
            &solve(&a.to_array(), None).unwrap(),
            &gauss_jordan(&a, &eye),
        ));
    }
    worst
}

/// Worst relative Frobenius error over `instances` random problems.
pub fn check_svd(instances: usize, seed: u64) -> f64 {
    let mut worst = 0.0f64;
    let mut rng = Rng::new(seed);
    for _ in 0..instances {
        let (m, n) = (size(&mut rng), size(&mut rng));
        let a = Dense::random(&mut rng, m, n);
        let r = svd(&a.to_array(), -1, -1).unwrap();
        let k = m.min(n);

        // The eigenvalues of [[0, A], [Aᵀ, 0]] are ±σ plus |m - n| zeros.
        let mut aug = Dense::zeros(m + n, m + n);
        for i in 0..m {
            for j in 0..n {
                aug.v[i][m + j] = a.v[i][j];
                aug.v[m + j][i] = a.v[i][j];
            }
        }
        let mut eig = jacobi_eigenvalues(&aug);
        eig.sort_by(|x, y| y.total_cmp(x));
        let mut want = Dense::zeros(k, 1);
        (0..k).for_each(|i| want.v[i][0] = eig[i].max(0.0));
        worst = worst.max(err(&r.d, &want));

        let d = r.d.to_doubles();
        let (u, v) = (r.u.to_doubles(), r.v.to_doubles());
        let mut recon = Dense::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                recon.v[i][j] = (0..k).map(|l| u[l * m + i] * d[l] * v[l * n + j]).sum();
            }
        }
        worst = worst.max(err(&a.to_array(), &recon));
    }
    worst
}

/// Every check, labelled by the kernels it covers.
/// Returns the worst relative error over `instances` problems from `seed`.
pub type Check = fn(usize, u64) -> f64;

pub const CHECKS: [(&str, Check); 7] = [
    ("matmul", check_matmul),
    ("gemm", check_gemm),
    ("chol", check_chol),
    ("forwardsolve/backsolve", check_triangular),
    ("trsm", check_trsm),
    ("solve", check_solve),
    ("svd", check_svd),
];
