//! Synthetic science datasets: random quadratic polynomial (RP), RCL circuit
//! current (RCL), Wheatstone bridge voltage (WSB) and 2D Ising energies.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Rp,
    Rcl,
    Wsb,
    Ising,
}

impl GeneratorKind {
    pub fn default_noise(self) -> f64 {
        match self {
            GeneratorKind::Rcl | GeneratorKind::Wsb => 0.1,
            GeneratorKind::Rp | GeneratorKind::Ising => 0.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Some(Self::Rp),
            "rcl" => Some(Self::Rcl),
            "wsb" => Some(Self::Wsb),
            "ising" => Some(Self::Ising),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Rp => "rp",
            GeneratorKind::Rcl => "rcl",
            GeneratorKind::Wsb => "wsb",
            GeneratorKind::Ising => "ising",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Additive Gaussian noise on the target; `None` uses the generator default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_std: Option<f64>,
    /// Ising lattice side length.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<usize>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            seed,
            noise_std: None,
            lattice: None,
        }
    }

    pub fn noiseless(mut self) -> Self {
        self.noise_std = Some(0.0);
        self
    }

    pub fn noise(&self) -> f64 {
        self.noise_std.unwrap_or_else(|| self.kind.default_noise())
    }
}

/// Dataset for `spec`. Equivalent to `generate_draw(spec, 0)`.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset<f64>> {
    generate_draw(spec, 0)
}

/// Independent sample number `draw` from the same underlying function: the
/// RP coefficients depend only on `spec.seed`, the inputs and noise on both.
pub fn generate_draw(spec: &GeneratorSpec, draw: u64) -> Result<Dataset<f64>> {
    if spec.n == 0 {
        return Err(Error::Config("generator needs n >= 1".into()));
    }
    let noise = spec.noise();
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Config(format!("invalid noise level {noise}")));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, 1000 + draw));
    let provenance = format!(
        "generator:{}:n={}:seed={}",
        spec.kind.name(),
        spec.n,
        spec.seed
    );
    let (x, y, names, target) = match spec.kind {
        GeneratorKind::Rp => {
            let poly = RandomPolynomial::from_seed(spec.seed);
            let (x, y) = poly.sample(spec.n, noise, &mut rng);
            let names = (1..=5).map(|i| format!("x{i}")).collect();
            (x, y, names, "y")
        }
        GeneratorKind::Rcl => {
            let (x, y) = RclCircuit.sample(spec.n, noise, &mut rng);
            let names = ["V0", "omega", "t", "R", "L", "C"]
                .map(String::from)
                .to_vec();
            (x, y, names, "I0")
        }
        GeneratorKind::Wsb => {
            let (x, y) = Wheatstone.sample(spec.n, noise, &mut rng);
            let names = ["U", "R1", "R2", "R3"].map(String::from).to_vec();
            (x, y, names, "V")
        }
        GeneratorKind::Ising => {
            let l = spec.lattice.unwrap_or(20);
            if l < 2 {
                return Err(Error::Config(
                    "ising lattice side must be at least 2".into(),
                ));
            }
            let (x, y) = sample_ising(spec.n, l, noise, &mut rng);
            let names = (0..l * l).map(|i| format!("s{i}")).collect();
            (x, y, names, "E")
        }
    };
    let d = names.len();
    Dataset::new(
        Matrix::from_vec(spec.n, d, x)?,
        y,
        names,
        target,
        provenance,
    )
}

fn add_noise(y: f64, std: f64, rng: &mut ChaCha8Rng) -> f64 {
    if std == 0.0 {
        y
    } else {
        y + Normal::new(0.0, std).expect("valid std").sample(rng)
    }
}

/// `y = Σ_{i≤j} a_ij x_i x_j + Σ_i b_i x_i + c` over five features.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomPolynomial {
    /// Upper-triangular quadratic coefficients, `quad[i][j]` used for `i ≤ j`.
    pub quad: [[f64; 5]; 5],
    pub linear: [f64; 5],
    pub constant: f64,
}

impl RandomPolynomial {
    pub const DIM: usize = 5;

    /// Coefficients uniform in `[-1, 1]`.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = seed::rng(seed::derive(seed, 999));
        let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let mut quad = [[0.0; 5]; 5];
        for (i, row) in quad.iter_mut().enumerate() {
            for q in &mut row[i..] {
                *q = u.sample(&mut rng);
            }
        }
        let linear = std::array::from_fn(|_| u.sample(&mut rng));
        let constant = u.sample(&mut rng);
        Self {
            quad,
            linear,
            constant,
        }
    }

    #[allow(clippy::needless_range_loop)]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut y = self.constant;
        for i in 0..5 {
            y += self.linear[i] * x[i];
            for j in i..5 {
                y += self.quad[i][j] * x[i] * x[j];
            }
        }
        y
    }

    /// Features uniform in `[-1, 1]^5`.
    pub fn sample(&self, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let u = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let mut x = Vec::with_capacity(n * 5);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row: [f64; 5] = std::array::from_fn(|_| u.sample(rng));
            y.push(add_noise(self.eval(&row), noise, rng));
            x.extend_from_slice(&row);
        }
        (x, y)
    }
}

/// Current amplitude through a driven series RCL circuit.
#[derive(Debug, Clone, Copy, Default)]
pub struct RclCircuit;

impl RclCircuit {
    /// Sampling box for `(V0, ω, t, R, L, C)`.
    pub const RANGES: [(f64, f64); 6] = [
        (1.0, 2.0),
        (1.0, 3.0),
        (0.0, 2.0 * PI),
        (0.5, 2.0),
        (0.5, 2.0),
        (0.5, 2.0),
    ];

    /// `I0 = V0 cos(ωt) / sqrt(R² + (ωL − 1/(ωC))²)`.
    pub fn current(v0: f64, omega: f64, t: f64, r: f64, l: f64, c: f64) -> f64 {
        let reactance = omega * l - 1.0 / (omega * c);
        v0 * (omega * t).cos() / (r * r + reactance * reactance).sqrt()
    }

    pub fn sample(&self, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let dists =
            Self::RANGES.map(|(lo, hi)| Uniform::new_inclusive(lo, hi).expect("valid range"));
        let mut x = Vec::with_capacity(n * 6);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let p: [f64; 6] = std::array::from_fn(|k| dists[k].sample(rng));
            let i0 = Self::current(p[0], p[1], p[2], p[3], p[4], p[5]);
            y.push(add_noise(i0, noise, rng));
            x.extend_from_slice(&p);
        }
        (x, y)
    }
}

/// Bridge voltage `V = U (R2/(R1+R2) − R3/(R2+R3))`, with the second
/// denominator exactly as in the reference generator.
#[derive(Debug, Clone, Copy, Default)]
pub struct Wheatstone;

impl Wheatstone {
    /// Sampling box for `(U, R1, R2, R3)`.
    pub const RANGES: [(f64, f64); 4] = [(1.0, 2.0), (0.5, 2.0), (0.5, 2.0), (0.5, 2.0)];

    pub fn voltage(u: f64, r1: f64, r2: f64, r3: f64) -> f64 {
        u * (r2 / (r1 + r2) - r3 / (r2 + r3))
    }

    pub fn sample(&self, n: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let dists =
            Self::RANGES.map(|(lo, hi)| Uniform::new_inclusive(lo, hi).expect("valid range"));
        let mut x = Vec::with_capacity(n * 4);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let p: [f64; 4] = std::array::from_fn(|k| dists[k].sample(rng));
            y.push(add_noise(Self::voltage(p[0], p[1], p[2], p[3]), noise, rng));
            x.extend_from_slice(&p);
        }
        (x, y)
    }
}

/// Nearest-neighbour energy `E = −Σ⟨ij⟩ s_i s_j` on a periodic `l × l`
/// lattice, spins row-major. Each site contributes its right and down bond.
pub fn ising_energy(spins: &[f64], l: usize) -> f64 {
    assert_eq!(spins.len(), l * l, "spin count must be l*l");
    let mut e = 0.0;
    for r in 0..l {
        for c in 0..l {
            let s = spins[r * l + c];
            e -= s * spins[r * l + (c + 1) % l];
            e -= s * spins[((r + 1) % l) * l + c];
        }
    }
    e
}

fn sample_ising(n: usize, l: usize, noise: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n * l * l);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let spins: Vec<f64> = (0..l * l)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        y.push(add_noise(ising_energy(&spins, l), noise, rng));
        x.extend(spins);
    }
    (x, y)
}
