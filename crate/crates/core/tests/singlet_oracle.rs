//! Independent check of the singlet kernel: joint probabilities computed as
//! `<ψ| P_A(a) ⊗ P_B(b) |ψ>` with explicit 4×4 complex matrices.

use bell_lab_core::model::Outcome;
use bell_lab_core::singlet::singlet_joint_prob;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type M2 = [[C; 2]; 2];
type M4 = [[C; 4]; 4];

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// `(I ± n·σ) / 2`.
fn projector(n: &[f64; 3], o: Outcome) -> M2 {
    let s = f64::from(o.value());
    let (x, y, z) = (n[0], n[1], n[2]);
    // n·σ = [[z, x - iy], [x + iy, -z]]
    [
        [c((1.0 + s * z) / 2.0, 0.0), c(s * x / 2.0, -s * y / 2.0)],
        [c(s * x / 2.0, s * y / 2.0), c((1.0 - s * z) / 2.0, 0.0)],
    ]
}

fn kron(a: &M2, b: &M2) -> M4 {
    let mut out = [[c(0.0, 0.0); 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[2 * i + k][2 * j + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

/// `(|01> - |10>) / √2` in the basis `|00>, |01>, |10>, |11>`.
fn singlet() -> [C; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [c(0.0, 0.0), c(h, 0.0), c(-h, 0.0), c(0.0, 0.0)]
}

fn expectation(m: &M4, psi: &[C; 4]) -> C {
    let mut acc = c(0.0, 0.0);
    for i in 0..4 {
        for j in 0..4 {
            acc += psi[i].conj() * m[i][j] * psi[j];
        }
    }
    acc
}

fn oracle(a: &[f64; 3], b: &[f64; 3], oa: Outcome, ob: Outcome) -> f64 {
    let p = expectation(&kron(&projector(a, oa), &projector(b, ob)), &singlet());
    assert!(p.im.abs() < 1e-14, "expectation of a Hermitian operator is real");
    p.re
}

fn random_unit(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

#[test]
fn closed_form_matches_projector_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5151);
    for _ in 0..2000 {
        let a = random_unit(&mut rng);
        let b = random_unit(&mut rng);
        let cos = dot(&a, &b);
        for (oa, ob) in PAIRS {
            let o = oracle(&a, &b, oa, ob);
            let closed = (1.0 - f64::from(oa.value() * ob.value()) * cos) / 4.0;
            assert!((o - closed).abs() < 1e-12, "closed form {closed} vs oracle {o}");
            let prod = singlet_joint_prob(&a, &b, oa, ob).unwrap();
            assert!((o - prod).abs() < 1e-12, "kernel {prod} vs oracle {o}");
        }
    }
}

#[test]
fn oracle_sums_to_one_and_marginals_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let a = random_unit(&mut rng);
        let b = random_unit(&mut rng);
        let p: Vec<f64> = PAIRS
            .iter()
            .map(|&(x, y)| singlet_joint_prob(&a, &b, x, y).unwrap())
            .collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] + p[1] - 0.5).abs() < 1e-12);
        assert!((p[0] + p[2] - 0.5).abs() < 1e-12);
    }
}

/// Rotation about a random axis by Rodrigues' formula.
fn rotate(v: &[f64; 3], k: &[f64; 3], angle: f64) -> [f64; 3] {
    let (s, co) = angle.sin_cos();
    let kxv = [
        k[1] * v[2] - k[2] * v[1],
        k[2] * v[0] - k[0] * v[2],
        k[0] * v[1] - k[1] * v[0],
    ];
    let kv = dot(k, v);
    [0, 1, 2].map(|i| v[i] * co + kxv[i] * s + k[i] * kv * (1.0 - co))
}

#[test]
fn rotation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let a = random_unit(&mut rng);
        let b = random_unit(&mut rng);
        let k = random_unit(&mut rng);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let (ra, rb) = (rotate(&a, &k, angle), rotate(&b, &k, angle));
        let (ra, rb) = (ra.map(|x| x / dot(&ra, &ra).sqrt()), rb.map(|x| x / dot(&rb, &rb).sqrt()));
        for (oa, ob) in PAIRS {
            let before = oracle(&a, &b, oa, ob);
            let after = oracle(&ra, &rb, oa, ob);
            assert!((before - after).abs() < 1e-12);
            let kernel = singlet_joint_prob(&ra, &rb, oa, ob).unwrap();
            assert!((kernel - before).abs() < 1e-12);
        }
    }
}

#[test]
fn equal_axes_never_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..1000 {
        let n = random_unit(&mut rng);
        assert!(oracle(&n, &n, Outcome::Plus, Outcome::Plus).abs() < 1e-12);
        assert!(oracle(&n, &n, Outcome::Minus, Outcome::Minus).abs() < 1e-12);
        assert!(singlet_joint_prob(&n, &n, Outcome::Plus, Outcome::Plus).unwrap().abs() < 1e-12);
    }
}
